//! Acceptance suite: one pass/fail line per criterion.

fn main() {
    println!("acceptance suite placeholder");
}
