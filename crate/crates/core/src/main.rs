fn main() {
    std::process::exit(indlim::cli::main_with(std::env::args_os()));
}
