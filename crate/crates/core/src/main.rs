fn main() {
    std::process::exit(ratspec::cli::run(std::env::args_os()));
}
