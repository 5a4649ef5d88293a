fn main() {
    std::process::exit(tutor_intent::cli::run(std::env::args_os()));
}
