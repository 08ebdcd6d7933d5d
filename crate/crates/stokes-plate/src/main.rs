fn main() {
    eprintln!("cli not wired yet");
    std::process::exit(1);
}
