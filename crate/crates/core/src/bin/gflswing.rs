fn main() {
    std::process::exit(gflswing::cli::main());
}
