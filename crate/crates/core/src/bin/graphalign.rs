fn main() {
    std::process::exit(graphalign::cli::run(std::env::args_os()));
}
