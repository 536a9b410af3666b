fn main() {
    std::process::exit(warpmms::cli::cli_main(std::env::args_os()));
}
