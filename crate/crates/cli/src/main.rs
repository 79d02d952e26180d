fn main() {
    std::process::exit(docdep_cli::run(std::env::args_os()));
}
