fn main() {
    std::process::exit(mixedflow::cli::run(std::env::args()));
}
