fn main() {
    std::process::exit(iwgt::cli::main_with(std::env::args_os()));
}
