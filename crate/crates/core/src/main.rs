fn main() {
    std::process::exit(apsl::cli::main());
}
