fn main() {
    std::process::exit(nlkg_cli::run_cli());
}
