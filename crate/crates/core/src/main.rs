fn main() {
    std::process::exit(pitchkit::cli::run(std::env::args_os()));
}
