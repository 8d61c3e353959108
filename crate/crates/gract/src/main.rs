fn main() {
    std::process::exit(gract::cli::main());
}
