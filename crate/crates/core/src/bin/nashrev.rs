fn main() {
    std::process::exit(nashrev::cli::main_with_args(std::env::args_os()));
}
