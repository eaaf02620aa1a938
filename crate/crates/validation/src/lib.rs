//! Workspace-level acceptance suite. The checks live in `tests/acceptance.rs`;
//! they sit in their own package so that they run after every module suite.
