fn main() {
    std::process::exit(bec_steering::cli::run(std::env::args_os()));
}
