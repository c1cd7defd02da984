fn main() {
    std::process::exit(heirloom::cli::main_with(std::env::args_os()));
}
