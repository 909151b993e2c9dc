fn main() {
    std::process::exit(pairwell::cli::main_with_args(std::env::args_os()));
}
