fn main() {
    std::process::exit(lesionscope::cli::run(std::env::args_os()));
}
