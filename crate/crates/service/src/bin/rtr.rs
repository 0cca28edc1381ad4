fn main() {
    std::process::exit(rtr_service::cli::run(std::env::args_os()));
}
