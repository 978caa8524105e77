// SPDX-License-Identifier: Apache-2.0

fn main() {
    std::process::exit(cktchan::cli::dispatch(std::env::args_os()));
}
