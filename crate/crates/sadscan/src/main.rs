fn main() {
    std::process::exit(sadscan::cli::run(std::env::args_os()));
}
