fn main() {
    std::process::exit(casetime::cli::run(std::env::args()));
}
