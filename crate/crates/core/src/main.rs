fn main() {
    std::process::exit(swirpad::cli::run(std::env::args_os()));
}
