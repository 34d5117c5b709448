fn main() {
    std::process::exit(mcdl::cli::run(std::env::args_os()));
}
