//! Callables: the things a caller can invoke.

use std::fmt;
use std::sync::{Arc, Mutex, RwLock};

use modelcaller_core::{ModelKind, Record, Signature, ToyModel, TrainInit, TrainTrace};
use serde::{Deserialize, Serialize};

use crate::error::{McError, Result};
use crate::library::FunctionImpl;
use crate::remote::{RemoteEndpoint, RemoteSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallableKind {
    Model,
    Function,
    External,
    NestedCaller,
}

impl CallableKind {
    /// Models see inputs plus context; everything else sees inputs only.
    pub fn receives_context(self) -> bool {
        self == CallableKind::Model
    }
}

/// A toy model whose parameters are shared by every caller that registers
/// it. Training works on a copy and commits it in one swap, so concurrent
/// predictions see either the old or the new parameters.
#[derive(Debug)]
pub struct SharedModel {
    current: RwLock<ToyModel>,
    commit: Mutex<()>,
}

impl SharedModel {
    pub fn new(model: ToyModel) -> Self {
        Self { current: RwLock::new(model), commit: Mutex::new(()) }
    }

    pub fn predict(&self, input: &Record) -> Result<Record, String> {
        self.current.read().expect("model lock").predict(input).map_err(|e| e.to_string())
    }

    pub fn train(&self, data: &[(Record, Record)], init: TrainInit) -> Result<TrainTrace> {
        let _commit = self.commit.lock().expect("commit lock");
        let mut next = self.snapshot();
        let trace = next.train(data, init)?;
        *self.current.write().expect("model lock") = next;
        Ok(trace)
    }

    pub fn snapshot(&self) -> ToyModel {
        self.current.read().expect("model lock").clone()
    }

    pub fn fingerprint(&self) -> u64 {
        self.current.read().expect("model lock").fingerprint()
    }
}

pub enum Binding {
    /// In-process function. `name` is its library name, if it has one.
    Function { name: Option<String>, imp: FunctionImpl },
    Model(Arc<SharedModel>),
    Remote(Arc<RemoteEndpoint>),
    /// Collaboration queue answered by a person or an outside system.
    Queue,
    /// Another caller, invoked through its own pipeline.
    Nested(String),
}

impl fmt::Debug for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binding::Function { name, .. } => f.debug_struct("Function").field("name", name).finish(),
            Binding::Model(m) => f.debug_tuple("Model").field(m).finish(),
            Binding::Remote(r) => f.debug_tuple("Remote").field(r).finish(),
            Binding::Queue => f.write_str("Queue"),
            Binding::Nested(id) => f.debug_tuple("Nested").field(id).finish(),
        }
    }
}

#[derive(Debug)]
pub struct Callable {
    pub id: String,
    pub kind: CallableKind,
    pub signature: Signature,
    pub binding: Binding,
}

impl Callable {
    pub fn function(
        id: impl Into<String>,
        signature: Signature,
        f: impl Fn(&Record) -> Result<Record, String> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            kind: CallableKind::Function,
            signature,
            binding: Binding::Function { name: None, imp: Arc::new(f) },
        }
    }

    pub fn named_function(id: impl Into<String>, signature: Signature, name: impl Into<String>, imp: FunctionImpl) -> Self {
        Self {
            id: id.into(),
            kind: CallableKind::Function,
            signature,
            binding: Binding::Function { name: Some(name.into()), imp },
        }
    }

    pub fn model(id: impl Into<String>, signature: Signature, model: ToyModel) -> Self {
        Self {
            id: id.into(),
            kind: CallableKind::Model,
            signature,
            binding: Binding::Model(Arc::new(SharedModel::new(model))),
        }
    }

    /// A built-in toy model predicting `signature.outputs`.
    pub fn builtin_model(id: impl Into<String>, kind: ModelKind, signature: Signature, seed: u64) -> Result<Self> {
        let outputs = signature.outputs.names().map(str::to_string).collect();
        let model = ToyModel::new(kind, outputs, seed)?;
        Ok(Self::model(id, signature, model))
    }

    /// A remotely served callable. Remote models receive context like local
    /// ones but are not trained by the caller.
    pub fn remote(id: impl Into<String>, kind: CallableKind, signature: Signature, spec: RemoteSpec) -> Self {
        Self { id: id.into(), kind, signature, binding: Binding::Remote(Arc::new(RemoteEndpoint::new(spec))) }
    }

    pub fn external(id: impl Into<String>, signature: Signature) -> Self {
        Self { id: id.into(), kind: CallableKind::External, signature, binding: Binding::Queue }
    }

    pub fn nested(id: impl Into<String>, caller_id: impl Into<String>, signature: Signature) -> Self {
        Self {
            id: id.into(),
            kind: CallableKind::NestedCaller,
            signature,
            binding: Binding::Nested(caller_id.into()),
        }
    }

    pub fn trainable(&self) -> bool {
        matches!(self.binding, Binding::Model(_))
    }

    pub fn shared_model(&self) -> Option<&Arc<SharedModel>> {
        match &self.binding {
            Binding::Model(m) => Some(m),
            _ => None,
        }
    }

    pub fn nested_caller(&self) -> Option<&str> {
        match &self.binding {
            Binding::Nested(id) => Some(id),
            _ => None,
        }
    }

    pub fn descriptor(&self) -> CallableDescriptor {
        let binding = match &self.binding {
            Binding::Function { name, .. } => BindingDescriptor::Function { name: name.clone() },
            Binding::Model(m) => BindingDescriptor::Model { model: m.snapshot() },
            Binding::Remote(r) => BindingDescriptor::Remote { spec: r.spec().clone() },
            Binding::Queue => BindingDescriptor::Queue,
            Binding::Nested(id) => BindingDescriptor::Nested { caller: id.clone() },
        };
        CallableDescriptor { id: self.id.clone(), kind: self.kind, signature: self.signature.clone(), binding }
    }
}

/// Persisted form of a callable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallableDescriptor {
    pub id: String,
    pub kind: CallableKind,
    pub signature: Signature,
    pub binding: BindingDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BindingDescriptor {
    Function {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Model {
        model: ToyModel,
    },
    Remote {
        #[serde(flatten)]
        spec: RemoteSpec,
    },
    Queue,
    Nested {
        caller: String,
    },
}

/// Wire form used to create a callable through the gateway or CLI.
///
/// Exactly one of `builtin`, `function`, `remote`, `caller` selects the
/// binding, except for externals which need none. A spec with only an `id`
/// refers to an already known callable (sharing). A missing signature
/// defaults from the caller it is registered into.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallableSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<CallableKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<Signature>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<ModelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caller: Option<String>,
}

impl CallableSpec {
    pub fn is_reference(&self) -> bool {
        self.kind.is_none()
            && self.signature.is_none()
            && self.builtin.is_none()
            && self.function.is_none()
            && self.remote.is_none()
            && self.caller.is_none()
    }

    /// The kind this spec creates, inferred from the binding when omitted.
    pub fn resolved_kind(&self) -> Result<CallableKind> {
        if let Some(k) = self.kind {
            return Ok(k);
        }
        match (&self.builtin, &self.function, &self.remote, &self.caller) {
            (Some(_), None, None, None) => Ok(CallableKind::Model),
            (None, Some(_), None, None) => Ok(CallableKind::Function),
            (None, None, Some(_), None) => Ok(CallableKind::Model),
            (None, None, None, Some(_)) => Ok(CallableKind::NestedCaller),
            _ => Err(McError::Invalid(format!("callable `{}` needs exactly one binding", self.id))),
        }
    }
}
