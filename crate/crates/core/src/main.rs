fn main() {
    std::process::exit(lenssweep::cli::run(std::env::args_os()));
}
