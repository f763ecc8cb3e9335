fn main() {
    std::process::exit(otfuse_cli::main_with_args(std::env::args_os()));
}
