fn main() {
    std::process::exit(dmsol::cli::run(std::env::args_os()));
}
