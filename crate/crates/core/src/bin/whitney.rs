fn main() {
    std::process::exit(whitney_core::cli::main_entry(std::env::args_os()));
}
