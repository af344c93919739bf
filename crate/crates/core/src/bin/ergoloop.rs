fn main() {
    std::process::exit(ergoloop::cli::main_with_args(std::env::args_os()));
}
