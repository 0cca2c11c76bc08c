fn main() {
    std::process::exit(mcx_cli::main_with_args(std::env::args_os()));
}
