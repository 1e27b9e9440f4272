fn main() {
    std::process::exit(bifocus::cli::run(std::env::args_os()));
}
