fn main() {
    std::process::exit(vru_cli::main_with_args(std::env::args_os()));
}
