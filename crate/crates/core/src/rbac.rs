//! Role-based access control over caller methods.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Admin,
    Swe,
    Mle,
    Operator,
    Viewer,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::Admin, Role::Swe, Role::Mle, Role::Operator, Role::Viewer];

    pub fn parse(s: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.as_str() == s)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::Swe => "swe",
            Role::Mle => "mle",
            Role::Operator => "operator",
            Role::Viewer => "viewer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    CreateCaller,
    RegisterHost,
    RegisterModel,
    RegisterFunction,
    RegisterExternal,
    RegisterNested,
    Unregister,
    UpdateConfig,
    Call,
    Sensor,
    Read,
    Review,
    CollabAnswer,
    Train,
    Eval,
    Plan,
    RetireHost,
}

impl Method {
    pub const ALL: [Method; 17] = [
        Method::CreateCaller,
        Method::RegisterHost,
        Method::RegisterModel,
        Method::RegisterFunction,
        Method::RegisterExternal,
        Method::RegisterNested,
        Method::Unregister,
        Method::UpdateConfig,
        Method::Call,
        Method::Sensor,
        Method::Read,
        Method::Review,
        Method::CollabAnswer,
        Method::Train,
        Method::Eval,
        Method::Plan,
        Method::RetireHost,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::CreateCaller => "create-caller",
            Method::RegisterHost => "register-host",
            Method::RegisterModel => "register-model",
            Method::RegisterFunction => "register-function",
            Method::RegisterExternal => "register-external",
            Method::RegisterNested => "register-nested",
            Method::Unregister => "unregister",
            Method::UpdateConfig => "update-config",
            Method::Call => "call",
            Method::Sensor => "sensor",
            Method::Read => "read",
            Method::Review => "review",
            Method::CollabAnswer => "collab-answer",
            Method::Train => "train",
            Method::Eval => "eval",
            Method::Plan => "plan",
            Method::RetireHost => "retire-host",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny,
}

impl Decision {
    pub fn is_allowed(self) -> bool {
        self == Decision::Allow
    }
}

/// Default role table. Admin may do everything; viewer only reads;
/// software engineers add hosts and functions, ML engineers add models,
/// operators call and supervise.
pub fn authorize(role: Role, method: Method) -> Decision {
    use Method::*;
    let allowed = match role {
        Role::Admin => true,
        Role::Swe => matches!(
            method,
            CreateCaller | RegisterHost | RegisterFunction | RegisterExternal | RegisterNested | Unregister
                | UpdateConfig | Read
        ),
        Role::Mle => matches!(
            method,
            CreateCaller | RegisterModel | RegisterExternal | RegisterNested | Unregister | UpdateConfig | Call
                | Sensor | Read | Train | Eval | Plan
        ),
        Role::Operator => matches!(method, Call | Sensor | Read | Review | CollabAnswer),
        Role::Viewer => matches!(method, Read),
    };
    if allowed {
        Decision::Allow
    } else {
        Decision::Deny
    }
}

/// String form; unknown roles or methods are denied.
pub fn authorize_named(role: &str, method: &str) -> Decision {
    match (Role::parse(role), Method::parse(method)) {
        (Some(r), Some(m)) => authorize(r, m),
        _ => Decision::Deny,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_examples() {
        assert_eq!(authorize(Role::Swe, Method::RegisterModel), Decision::Deny);
        assert_eq!(authorize(Role::Mle, Method::RegisterModel), Decision::Allow);
        assert_eq!(authorize(Role::Viewer, Method::Call), Decision::Deny);
        assert_eq!(authorize(Role::Operator, Method::RetireHost), Decision::Deny);
        assert!(Method::ALL.iter().all(|&m| authorize(Role::Admin, m).is_allowed()));
        assert_eq!(authorize_named("intern", "read"), Decision::Deny);
        assert_eq!(authorize_named("swe", "register-model"), Decision::Deny);
    }

    #[test]
    fn viewer_is_read_only() {
        for m in Method::ALL {
            assert_eq!(authorize(Role::Viewer, m).is_allowed(), m == Method::Read);
        }
    }
}
