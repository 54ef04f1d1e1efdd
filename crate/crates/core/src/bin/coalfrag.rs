fn main() {
    std::process::exit(coalfrag::cli::run(std::env::args_os()));
}
