fn main() {
    std::process::exit(toolgate::cli::main_with_args(std::env::args_os()));
}
