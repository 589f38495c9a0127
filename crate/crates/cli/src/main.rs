fn main() {
    std::process::exit(pnc_cli::main_with_args(std::env::args_os()));
}
