fn main() {
    std::process::exit(fourfield::cli::run());
}
