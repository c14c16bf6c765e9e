fn main() {
    std::process::exit(taylorpi_cli::main_with(std::env::args_os()));
}
