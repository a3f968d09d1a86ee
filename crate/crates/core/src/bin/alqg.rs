fn main() {
    std::process::exit(alqg::cli::main_with_args(std::env::args_os()));
}
