fn main() {
    std::process::exit(qre_cli::cli::real_main());
}
