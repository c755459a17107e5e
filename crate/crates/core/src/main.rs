fn main() {
    std::process::exit(twophoton::cli::run(std::env::args_os()));
}
