fn main() {
    std::process::exit(toc_cli::main_with(std::env::args_os()));
}
