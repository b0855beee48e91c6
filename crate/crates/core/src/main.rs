fn main() {
    std::process::exit(hippo::cli::run(std::env::args_os()));
}
