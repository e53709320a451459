fn main() {
    std::process::exit(emosphere::cli::run(std::env::args_os()));
}
