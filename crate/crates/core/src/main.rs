fn main() {
    std::process::exit(nlerg::cli::run());
}
