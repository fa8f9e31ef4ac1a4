fn main() {
    std::process::exit(metaemb::cli::run(std::env::args_os()));
}
