fn main() {
    std::process::exit(unfold_kit::cli::real_main());
}
