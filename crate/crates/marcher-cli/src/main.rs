fn main() {
    std::process::exit(marcher_cli::run());
}
