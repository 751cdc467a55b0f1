//! Binds config backend specs to embedding backend implementations.

use std::io::Write;
use std::process::{Command, Stdio};

use vidrisk_core::embedding::{
    BackendDescriptor, ConcurrencyMode, EmbeddingBackend, EmbeddingError, Modality, MockBackend,
};

use crate::config::BackendSpec;

/// Builds the backend for one modality.
pub fn build_backend(spec: &BackendSpec, modality: Modality) -> Box<dyn EmbeddingBackend> {
    match spec {
        BackendSpec::Mock {
            dim,
            salt,
            class_signal,
        } => {
            let mut backend = MockBackend::new(modality, *dim, *salt);
            if *class_signal != 0.0 {
                backend = backend.with_class_signal(*class_signal);
            }
            Box::new(backend)
        }
        BackendSpec::Command {
            dim,
            command,
            args,
            id,
            version,
            serial,
        } => Box::new(CommandBackend {
            descriptor: BackendDescriptor {
                backend_id: id
                    .clone()
                    .unwrap_or_else(|| format!("command-{modality}:{command}")),
                modality,
                dim: *dim,
                version: version.clone().unwrap_or_else(|| "1".to_string()),
                concurrency: if *serial {
                    ConcurrencyMode::Serial
                } else {
                    ConcurrencyMode::Concurrent
                },
            },
            command: command.clone(),
            args: args.clone(),
        }),
    }
}

/// Out-of-process embedding adapter.
///
/// Protocol: one child process per item. The raw input bytes (framed image
/// or trimmed UTF-8 summary) go to the child's stdin; the child must write
/// exactly `dim` little-endian f32 values to stdout and exit 0. The child
/// inherits the environment, which is the only sanctioned channel for
/// backend credentials.
pub struct CommandBackend {
    descriptor: BackendDescriptor,
    command: String,
    args: Vec<String>,
}

impl CommandBackend {
    fn fail(&self, message: impl Into<String>) -> EmbeddingError {
        EmbeddingError::Backend {
            backend_id: self.descriptor.backend_id.clone(),
            video_id: None,
            message: message.into(),
        }
    }
}

impl EmbeddingBackend for CommandBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn embed(&self, input: &[u8]) -> Result<Vec<f32>, EmbeddingError> {
        let mut child = Command::new(&self.command)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| self.fail(format!("cannot spawn \"{}\": {e}", self.command)))?;

        child
            .stdin
            .take()
            .expect("stdin piped")
            .write_all(input)
            .map_err(|e| self.fail(format!("writing to backend stdin: {e}")))?;

        let output = child
            .wait_with_output()
            .map_err(|e| self.fail(format!("waiting for backend: {e}")))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            return Err(self.fail(format!(
                "backend exited with {}: {}",
                output.status,
                stderr.trim()
            )));
        }

        let expected = self.descriptor.dim * 4;
        if output.stdout.len() != expected {
            return Err(self.fail(format!(
                "backend wrote {} bytes, expected {expected} ({} f32 values)",
                output.stdout.len(),
                self.descriptor.dim
            )));
        }
        Ok(output
            .stdout
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_backend_round_trips_through_cat() {
        // `cat` is an identity embedding when the input is already dim*4
        // bytes of f32 data.
        let spec = BackendSpec::Command {
            dim: 3,
            command: "cat".into(),
            args: vec![],
            id: Some("identity".into()),
            version: None,
            serial: false,
        };
        let backend = build_backend(&spec, Modality::Text);
        let payload: Vec<u8> = [1.0f32, -2.5, 0.25]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        let out = backend.embed(&payload).unwrap();
        assert_eq!(out, vec![1.0, -2.5, 0.25]);
        assert_eq!(backend.descriptor().backend_id, "identity");
    }

    #[test]
    fn command_backend_reports_wrong_width() {
        let spec = BackendSpec::Command {
            dim: 4,
            command: "cat".into(),
            args: vec![],
            id: None,
            version: None,
            serial: false,
        };
        let backend = build_backend(&spec, Modality::Text);
        let err = backend.embed(&[0u8; 8]).unwrap_err();
        assert!(err.to_string().contains("expected 16"), "{err}");
    }

    #[test]
    fn missing_command_named_in_error() {
        let spec = BackendSpec::Command {
            dim: 1,
            command: "definitely-not-a-real-binary-xyz".into(),
            args: vec![],
            id: None,
            version: None,
            serial: false,
        };
        let backend = build_backend(&spec, Modality::Visual);
        let err = backend.embed(&[0u8; 4]).unwrap_err();
        assert!(
            err.to_string().contains("definitely-not-a-real-binary-xyz"),
            "{err}"
        );
    }
}
