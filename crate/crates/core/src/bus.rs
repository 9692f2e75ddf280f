//! In-process topic-based publish/subscribe bus with deterministic delivery.
//!
//! Topics are registered with a payload kind. Publishing assigns a per-topic
//! sequence number and enqueues the message on every current subscriber.
//! [`Bus::drain_cycle`] then steps components in a fixed order, handing each
//! the messages queued for it when its turn comes: a message published by an
//! earlier component reaches a later one in the same cycle, while a message
//! for a component that has already been stepped waits for the next cycle.
//!
//! External subscribers (bridges to the simulator or a network gateway) are
//! never stepped; their queues are drained with [`Bus::take_queue`].

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

/// Payloads report a kind so the bus can check them against the topic.
pub trait Kinded {
    fn kind(&self) -> &'static str;
}

#[derive(Debug)]
pub struct Message<P> {
    pub topic: String,
    pub seq: u64,
    pub payload: Arc<P>,
}

impl<P> Clone for Message<P> {
    fn clone(&self) -> Self {
        Self {
            topic: self.topic.clone(),
            seq: self.seq,
            payload: self.payload.clone(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BusError {
    #[error("topic `{0}` is not registered")]
    UnregisteredTopic(String),
    #[error("topic `{topic}` carries `{expected}` payloads, got `{got}`")]
    KindMismatch {
        topic: String,
        expected: &'static str,
        got: &'static str,
    },
    #[error("topic `{0}` is already registered with a different kind")]
    TopicConflict(String),
    #[error("component `{0}` is already registered")]
    DuplicateComponent(String),
    #[error("unknown component index {0}")]
    UnknownComponent(usize),
    #[error("component order must list every stepped component exactly once")]
    BadOrder,
}

pub type ComponentId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Delivery {
    pub component: String,
    pub topic: String,
    pub seq: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DeliveryLog {
    pub deliveries: Vec<Delivery>,
    /// Set when the per-cycle budget cut the cycle short.
    pub truncated: Option<String>,
    /// Publications rejected during the cycle.
    pub errors: Vec<String>,
}

impl DeliveryLog {
    pub fn is_empty(&self) -> bool {
        self.deliveries.is_empty()
    }
}

/// Messages a component publishes while handling a delivery.
pub struct Outbox<P> {
    items: Vec<(String, P)>,
}

impl<P> Outbox<P> {
    pub fn publish(&mut self, topic: &str, payload: P) {
        self.items.push((topic.to_string(), payload));
    }
}

struct Topic {
    kind: &'static str,
    next_seq: u64,
    subscribers: Vec<ComponentId>,
}

struct Slot<P> {
    id: String,
    external: bool,
    queue: VecDeque<Message<P>>,
}

pub struct Bus<P> {
    topics: BTreeMap<String, Topic>,
    components: Vec<Slot<P>>,
    budget: usize,
}

/// Default maximum deliveries per cycle.
pub const DEFAULT_BUDGET: usize = 10_000;

impl<P: Kinded> Bus<P> {
    pub fn new(budget: usize) -> Self {
        Self {
            topics: BTreeMap::new(),
            components: Vec::new(),
            budget,
        }
    }

    pub fn register_topic(&mut self, topic: &str, kind: &'static str) -> Result<(), BusError> {
        match self.topics.get(topic) {
            Some(t) if t.kind != kind => Err(BusError::TopicConflict(topic.to_string())),
            Some(_) => Ok(()),
            None => {
                self.topics.insert(
                    topic.to_string(),
                    Topic {
                        kind,
                        next_seq: 1,
                        subscribers: Vec::new(),
                    },
                );
                Ok(())
            }
        }
    }

    fn add_component(&mut self, id: &str, external: bool) -> Result<ComponentId, BusError> {
        if self.components.iter().any(|c| c.id == id) {
            return Err(BusError::DuplicateComponent(id.to_string()));
        }
        self.components.push(Slot {
            id: id.to_string(),
            external,
            queue: VecDeque::new(),
        });
        Ok(self.components.len() - 1)
    }

    /// Registers a component stepped by [`Bus::drain_cycle`].
    pub fn register_component(&mut self, id: &str) -> Result<ComponentId, BusError> {
        self.add_component(id, false)
    }

    /// Registers a subscriber drained from outside the cycle.
    pub fn register_external(&mut self, id: &str) -> Result<ComponentId, BusError> {
        self.add_component(id, true)
    }

    pub fn component_name(&self, c: ComponentId) -> Option<&str> {
        self.components.get(c).map(|s| s.id.as_str())
    }

    /// Components stepped by the cycle, in registration order.
    pub fn stepped_components(&self) -> Vec<ComponentId> {
        (0..self.components.len())
            .filter(|&c| !self.components[c].external)
            .collect()
    }

    pub fn subscribe(&mut self, c: ComponentId, topic: &str) -> Result<(), BusError> {
        if c >= self.components.len() {
            return Err(BusError::UnknownComponent(c));
        }
        let t = self
            .topics
            .get_mut(topic)
            .ok_or_else(|| BusError::UnregisteredTopic(topic.to_string()))?;
        if !t.subscribers.contains(&c) {
            t.subscribers.push(c);
        }
        Ok(())
    }

    pub fn publish(&mut self, topic: &str, payload: P) -> Result<u64, BusError> {
        let t = self
            .topics
            .get_mut(topic)
            .ok_or_else(|| BusError::UnregisteredTopic(topic.to_string()))?;
        if payload.kind() != t.kind {
            return Err(BusError::KindMismatch {
                topic: topic.to_string(),
                expected: t.kind,
                got: payload.kind(),
            });
        }
        let seq = t.next_seq;
        t.next_seq += 1;
        let payload = Arc::new(payload);
        for &c in &t.subscribers {
            self.components[c].queue.push_back(Message {
                topic: topic.to_string(),
                seq,
                payload: payload.clone(),
            });
        }
        Ok(seq)
    }

    pub fn pending(&self, c: ComponentId) -> usize {
        self.components.get(c).map_or(0, |s| s.queue.len())
    }

    pub fn total_pending(&self) -> usize {
        self.components.iter().map(|s| s.queue.len()).sum()
    }

    pub fn take_queue(&mut self, c: ComponentId) -> Vec<Message<P>> {
        self.components
            .get_mut(c)
            .map(|s| s.queue.drain(..).collect())
            .unwrap_or_default()
    }

    /// Steps each component in `order` once, delivering the messages queued
    /// for it at that moment. Publications made by the handler are
    /// enqueued immediately after it returns.
    pub fn drain_cycle(
        &mut self,
        order: &[ComponentId],
        handler: &mut dyn FnMut(ComponentId, &Message<P>, &mut Outbox<P>),
    ) -> Result<DeliveryLog, BusError> {
        let mut expected = self.stepped_components();
        let mut given = order.to_vec();
        expected.sort_unstable();
        given.sort_unstable();
        if expected != given {
            return Err(BusError::BadOrder);
        }
        let mut log = DeliveryLog::default();
        let mut delivered = 0;
        for &c in order {
            let batch: Vec<Message<P>> = self.components[c].queue.drain(..).collect();
            let mut batch = batch.into_iter();
            while let Some(msg) = batch.next() {
                if delivered >= self.budget {
                    let mut rest: VecDeque<Message<P>> =
                        std::iter::once(msg).chain(batch).collect();
                    rest.append(&mut self.components[c].queue);
                    self.components[c].queue = rest;
                    let pending = self.total_pending();
                    let diag = format!(
                        "delivery budget of {} reached at component `{}`; {pending} message(s) deferred",
                        self.budget, self.components[c].id
                    );
                    log::warn!("{diag}");
                    log.truncated = Some(diag);
                    return Ok(log);
                }
                delivered += 1;
                log.deliveries.push(Delivery {
                    component: self.components[c].id.clone(),
                    topic: msg.topic.clone(),
                    seq: msg.seq,
                });
                let mut out = Outbox { items: Vec::new() };
                handler(c, &msg, &mut out);
                for (topic, payload) in out.items {
                    if let Err(e) = self.publish(&topic, payload) {
                        log.errors.push(format!("{}: {e}", self.components[c].id));
                    }
                }
            }
        }
        Ok(log)
    }

    /// Like [`Bus::drain_cycle`] but hands each component its whole queue
    /// snapshot at once, including an empty one, so components can act once
    /// per cycle. Publications are enqueued after the component returns.
    pub fn step_cycle(
        &mut self,
        order: &[ComponentId],
        handler: &mut dyn FnMut(ComponentId, &[Message<P>], &mut Outbox<P>),
    ) -> Result<DeliveryLog, BusError> {
        let mut expected = self.stepped_components();
        let mut given = order.to_vec();
        expected.sort_unstable();
        given.sort_unstable();
        if expected != given {
            return Err(BusError::BadOrder);
        }
        let mut log = DeliveryLog::default();
        let mut delivered = 0;
        for &c in order {
            let room = self.budget.saturating_sub(delivered);
            let queue = &mut self.components[c].queue;
            let take = queue.len().min(room);
            let batch: Vec<Message<P>> = queue.drain(..take).collect();
            let left = queue.len();
            if left > 0 && log.truncated.is_none() {
                let diag = format!(
                    "delivery budget of {} reached at component `{}`; {left} message(s) deferred",
                    self.budget, self.components[c].id
                );
                log::warn!("{diag}");
                log.truncated = Some(diag);
            }
            delivered += batch.len();
            for msg in &batch {
                log.deliveries.push(Delivery {
                    component: self.components[c].id.clone(),
                    topic: msg.topic.clone(),
                    seq: msg.seq,
                });
            }
            let mut out = Outbox { items: Vec::new() };
            handler(c, &batch, &mut out);
            for (topic, payload) in out.items {
                if let Err(e) = self.publish(&topic, payload) {
                    log.errors.push(format!("{}: {e}", self.components[c].id));
                }
            }
        }
        Ok(log)
    }
}
