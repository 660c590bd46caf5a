use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use log::warn;

use super::{annotate_user, AnnotateError, AnnotationRequest, AnnotationResult, ChatBackend, Topic, TweetClass};
use crate::stance::Stance;

/// Time source for rate limiting and backoff.
pub trait Clock: Send + Sync {
    /// Time elapsed since the clock's origin.
    fn now(&self) -> Duration;
    /// Blocks until `now() ≥ t`.
    fn sleep_until(&self, t: Duration);

    fn sleep(&self, d: Duration) {
        self.sleep_until(self.now() + d);
    }
}

pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep_until(&self, t: Duration) {
        let now = self.now();
        if t > now {
            std::thread::sleep(t - now);
        }
    }
}

/// A clock that jumps forward instead of sleeping.
#[derive(Default)]
pub struct VirtualClock {
    now: Mutex<Duration>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().expect("clock lock") += d;
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        *self.now.lock().expect("clock lock")
    }

    fn sleep_until(&self, t: Duration) {
        let mut now = self.now.lock().expect("clock lock");
        if t > *now {
            *now = t;
        }
    }
}

/// Each call occupies a slot of `1 / rate` seconds; a call may start no
/// earlier than the end of the previous slot.
#[derive(Clone, Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Duration,
}

impl RateLimiter {
    pub fn per_second(rate: f64) -> Result<Self, AnnotateError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(AnnotateError::InvalidRequest {
                user: String::new(),
                reason: format!("rate limit {rate} must be > 0"),
            });
        }
        Ok(Self {
            interval: Duration::from_secs_f64(1.0 / rate),
            next: Duration::ZERO,
        })
    }

    /// Reserves the next slot and returns its start time.
    pub fn reserve(&mut self, now: Duration) -> Duration {
        let start = now.max(self.next);
        self.next = start + self.interval;
        start
    }

    /// End of the last reserved slot.
    pub fn horizon(&self) -> Duration {
        self.next
    }
}

#[derive(Clone, Debug)]
pub struct BatchOptions {
    /// Calls per second; `None` disables limiting.
    pub rate_per_second: Option<f64>,
    /// Users annotated in parallel.
    pub concurrency: usize,
    /// Progress journal; completed users found here are not re-requested.
    pub journal: Option<PathBuf>,
    pub max_attempts: u32,
    pub backoff: Duration,
    /// Set to stop taking new users; users in flight finish.
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            rate_per_second: None,
            concurrency: 1,
            journal: None,
            max_attempts: 3,
            backoff: Duration::from_secs(1),
            cancel: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FailedUser {
    pub user_id: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchReport {
    /// Completed users in request order, including journaled ones.
    pub results: Vec<AnnotationResult>,
    pub failed: Vec<FailedUser>,
    /// Users taken from the journal instead of the service.
    pub resumed: usize,
    /// Service calls made, retries included.
    pub calls: usize,
    pub cancelled: bool,
    /// Clock time from start to the end of the last rate-limit slot.
    pub elapsed: Duration,
}

/// Rate limiting and retry with exponential backoff around a backend.
pub struct GuardedBackend<'a> {
    inner: &'a dyn ChatBackend,
    limiter: Option<Mutex<RateLimiter>>,
    clock: &'a dyn Clock,
    max_attempts: u32,
    backoff: Duration,
    calls: AtomicUsize,
}

impl<'a> GuardedBackend<'a> {
    pub fn new(
        inner: &'a dyn ChatBackend,
        clock: &'a dyn Clock,
        rate_per_second: Option<f64>,
        max_attempts: u32,
        backoff: Duration,
    ) -> Result<Self, AnnotateError> {
        if max_attempts == 0 {
            return Err(AnnotateError::InvalidRequest {
                user: String::new(),
                reason: "max_attempts must be ≥ 1".into(),
            });
        }
        Ok(Self {
            inner,
            limiter: rate_per_second.map(RateLimiter::per_second).transpose()?.map(Mutex::new),
            clock,
            max_attempts,
            backoff,
            calls: AtomicUsize::new(0),
        })
    }

    /// Calls made so far, retries included.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for GuardedBackend<'_> {
    fn classify(&self, topic: Topic, tweet: &str) -> Result<String, AnnotateError> {
        let mut delay = self.backoff;
        let mut attempt = 1;
        loop {
            if let Some(l) = &self.limiter {
                let start = l.lock().expect("limiter lock").reserve(self.clock.now());
                self.clock.sleep_until(start);
            }
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.inner.classify(topic, tweet) {
                Ok(r) => return Ok(r),
                Err(e) if attempt < self.max_attempts => {
                    warn!("attempt {attempt} failed: {e}; retrying in {delay:?}");
                    self.clock.sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Annotates every request, resuming from and appending to the journal.
pub fn annotate_batch(
    requests: &[AnnotationRequest],
    backend: &dyn ChatBackend,
    opts: &BatchOptions,
    clock: &dyn Clock,
) -> Result<BatchReport, AnnotateError> {
    let mut seen = HashSet::new();
    for r in requests {
        r.validate()?;
        if !seen.insert(r.user_id.as_str()) {
            return Err(AnnotateError::InvalidRequest {
                user: r.user_id.clone(),
                reason: "duplicate user in batch".into(),
            });
        }
    }
    if opts.concurrency == 0 || opts.max_attempts == 0 {
        return Err(AnnotateError::InvalidRequest {
            user: String::new(),
            reason: "concurrency and max_attempts must be ≥ 1".into(),
        });
    }
    let mut done: BTreeMap<String, AnnotationResult> = BTreeMap::new();
    if let Some(path) = &opts.journal {
        if path.exists() {
            for r in read_journal(path)? {
                done.insert(r.user_id.clone(), r);
            }
            drop_partial_line(path)?;
        }
    }
    let journal = match &opts.journal {
        Some(p) => Some(Mutex::new(OpenOptions::new().create(true).append(true).open(p)?)),
        None => None,
    };

    let start = clock.now();
    let guarded = GuardedBackend::new(backend, clock, opts.rate_per_second, opts.max_attempts, opts.backoff)?;
    let pending: Vec<usize> = (0..requests.len())
        .filter(|&i| done.get(&requests[i].user_id).map_or(true, |r| r.topic != requests[i].topic))
        .collect();
    let resumed = requests.len() - pending.len();
    let slots: Vec<Mutex<Option<Result<AnnotationResult, String>>>> =
        (0..requests.len()).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let journal_error: Mutex<Option<std::io::Error>> = Mutex::new(None);
    let cancelled = || opts.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst));

    std::thread::scope(|scope| {
        for _ in 0..opts.concurrency.min(pending.len()) {
            scope.spawn(|| loop {
                if cancelled() {
                    break;
                }
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = pending.get(k) else { break };
                let outcome = annotate_user(&requests[i], &guarded);
                if let (Ok(r), Some(j)) = (&outcome, &journal) {
                    let line = serde_json::to_string(r).expect("serialisable result");
                    let mut f = j.lock().expect("journal lock");
                    if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                        journal_error.lock().expect("error lock").get_or_insert(e);
                    }
                }
                *slots[i].lock().expect("slot lock") = Some(outcome.map_err(|e| e.to_string()));
            });
        }
    });
    if let Some(e) = journal_error.into_inner().expect("error lock") {
        return Err(AnnotateError::Io(e));
    }
    if let Some(l) = &guarded.limiter {
        let horizon = l.lock().expect("limiter lock").horizon();
        if horizon > start {
            clock.sleep_until(horizon);
        }
    }

    let mut results = Vec::new();
    let mut failed = Vec::new();
    for (i, slot) in slots.into_iter().enumerate() {
        let user = &requests[i].user_id;
        match slot.into_inner().expect("slot lock") {
            Some(Ok(r)) => results.push(r),
            Some(Err(error)) => failed.push(FailedUser {
                user_id: user.clone(),
                error,
            }),
            None => {
                if let Some(r) = done.remove(user) {
                    results.push(r);
                }
            }
        }
    }
    Ok(BatchReport {
        results,
        failed,
        resumed,
        calls: guarded.calls(),
        cancelled: cancelled(),
        elapsed: clock.now() - start,
    })
}

/// Reads completed results from a journal. A final line cut short by an
/// interruption is ignored.
pub fn read_journal(path: &Path) -> Result<Vec<AnnotationResult>, AnnotateError> {
    let text = std::fs::read_to_string(path)?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AnnotationResult>(line) {
            Ok(r) => out.push(r),
            Err(_) if i + 1 == lines.len() && !complete => {
                warn!("ignoring truncated last journal line");
            }
            Err(e) => {
                return Err(AnnotateError::Journal {
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Cuts an interrupted final line so that appends start on a fresh line.
fn drop_partial_line(path: &Path) -> Result<(), AnnotateError> {
    let bytes = std::fs::read(path)?;
    if bytes.last().is_some_and(|&b| b != b'\n') {
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    }
    Ok(())
}

/// Writes `user_id<TAB>label<TAB>per_tweet_classes`, classes comma-separated.
pub fn write_results<W: Write>(mut out: W, results: &[AnnotationResult]) -> std::io::Result<()> {
    for r in results {
        let classes: Vec<&str> = r.classes.iter().map(|c| c.word(r.topic)).collect();
        writeln!(out, "{}\t{}\t{}", r.user_id, r.label_name(), classes.join(","))?;
    }
    Ok(())
}

/// Parses a results file back into `(user, label, classes)` rows.
pub fn read_results<R: BufRead>(
    input: R,
    topic: Topic,
) -> Result<Vec<(String, Option<Stance>, Vec<TweetClass>)>, AnnotateError> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| AnnotateError::Results { line: i + 1, message };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(bad(format!("expected 3 columns, found {}", cols.len())));
        }
        let label = match cols[1] {
            "undetermined" => None,
            w => Some(topic.stance_names().parse(w).map_err(|e| bad(e.to_string()))?),
        };
        let classes = cols[2]
            .split(',')
            .filter(|w| !w.is_empty())
            .map(|w| TweetClass::from_word(w, topic).ok_or_else(|| bad(format!("unknown class {w:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((cols[0].to_string(), label, classes));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limiter_slots() {
        let mut l = RateLimiter::per_second(2.0).unwrap();
        assert_eq!(l.reserve(Duration::ZERO), Duration::ZERO);
        assert_eq!(l.reserve(Duration::ZERO), Duration::from_millis(500));
        assert_eq!(l.reserve(Duration::from_secs(5)), Duration::from_secs(5));
        assert_eq!(l.horizon(), Duration::from_millis(5500));
        assert!(RateLimiter::per_second(0.0).is_err());
    }

    #[test]
    fn virtual_clock_never_goes_back() {
        let c = VirtualClock::new();
        c.sleep_until(Duration::from_secs(3));
        c.sleep_until(Duration::from_secs(1));
        assert_eq!(c.now(), Duration::from_secs(3));
        c.sleep(Duration::from_secs(2));
        assert_eq!(c.now(), Duration::from_secs(5));
    }
}
