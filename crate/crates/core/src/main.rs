fn main() {
    std::process::exit(latentprobe::cli::main());
}
