fn main() {
    std::process::exit(sumprod_cli::main_with_args(std::env::args_os()));
}
