fn main() {
    std::process::exit(rc_recover::cli::main(std::env::args_os()));
}
