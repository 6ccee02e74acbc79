fn main() {
    std::process::exit(tentkit::cli::main_with_args(std::env::args()));
}
