fn main() {
    std::process::exit(wattrace::cli::main());
}
