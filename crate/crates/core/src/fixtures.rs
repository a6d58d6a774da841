//! Bundled reference data.

/// Trace of the `hello-world` container: runc's init sequence followed by
/// the `hello` binary writing its greeting and exiting.
pub const HELLO_WORLD_TRACE: &str = include_str!("../fixtures/hello-world.trace");

/// Docker's default seccomp allow-list, flattened to one rule per name.
pub const DOCKER_DEFAULT_PROFILE: &str = include_str!("../fixtures/docker-default.json");

/// Where [`DOCKER_DEFAULT_PROFILE`] came from and how it was transformed.
pub const DOCKER_DEFAULT_PROVENANCE: &str = include_str!("../fixtures/docker-default.provenance.txt");

/// Process name runc's init carries in traces before `execve`.
pub const RUNC_INIT_PROCESS: &str = "runc:[2:INIT]";
