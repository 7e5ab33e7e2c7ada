fn main() {
    std::process::exit(deconv_cli::run());
}
