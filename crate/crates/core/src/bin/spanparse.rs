fn main() {
    std::process::exit(spanparse::cli::run(std::env::args_os()));
}
