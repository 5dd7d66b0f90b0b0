fn main() {
    std::process::exit(zenosim::cli::run());
}
