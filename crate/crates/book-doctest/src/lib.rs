// mdbook cannot run listings that depend on a workspace crate, so each
// chapter is pulled in as the docs of an empty module and `cargo test --doc`
// runs its code blocks. One module per chapter keeps failures traceable to a
// file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/molecules.md")]
pub mod molecules {}
#[doc = include_str!("../../../book/src/motifs.md")]
pub mod motifs {}
#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/losses.md")]
pub mod losses {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
