fn main() {
    std::process::exit(corrlda::cli::main());
}
