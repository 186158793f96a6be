fn main() {
    std::process::exit(flock_stability::cli::main_with_args(std::env::args_os()));
}
