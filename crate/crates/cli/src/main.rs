fn main() {
    std::process::exit(cantor_cli::main_with_args(std::env::args_os()));
}
