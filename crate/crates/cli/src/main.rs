fn main() {
    std::process::exit(grounding_cli::run(std::env::args_os()));
}
