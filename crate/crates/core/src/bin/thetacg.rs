fn main() {
    std::process::exit(thetacg::cli::main_with_args(std::env::args_os()));
}
