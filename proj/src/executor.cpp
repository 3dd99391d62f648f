#include "codeopt/executor.hpp"

#include <fcntl.h>
#include <linux/landlock.h>
#include <poll.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>

// The system header may predate newer access rights; their bit values are
// fixed by the kernel ABI.
#ifndef LANDLOCK_ACCESS_FS_REFER
#define LANDLOCK_ACCESS_FS_REFER (1ULL << 13)
#endif
#ifndef LANDLOCK_ACCESS_FS_TRUNCATE
#define LANDLOCK_ACCESS_FS_TRUNCATE (1ULL << 14)
#endif
#ifndef LANDLOCK_ACCESS_FS_IOCTL_DEV
#define LANDLOCK_ACCESS_FS_IOCTL_DEV (1ULL << 15)
#endif

namespace codeopt {

namespace fs = std::filesystem;

std::string_view to_string(ExecKind k) noexcept {
    return k == ExecKind::DevSubset ? "DevSubset" : "FullData";
}

int TimeoutState::multiplier() const noexcept { return std::min(stage, multiplier_cap); }

void TimeoutState::check() const {
    if (stage < 1 || stage > multiplier_cap) {
        throw Error(ErrorCode::DomainError, "timeout stage out of range");
    }
    if (patience < 1) throw Error(ErrorCode::DomainError, "timeout patience must be positive");
    if (step < 1) throw Error(ErrorCode::DomainError, "timeout step must be positive");
    if (consecutive_timeouts < 0 || consecutive_timeouts >= patience) {
        throw Error(ErrorCode::DomainError, "consecutive timeout count out of range");
    }
}

TimeoutState escalate_timeout(TimeoutState state, ExitStatus outcome) {
    state.check();
    if (outcome != ExitStatus::Timeout) {
        state.consecutive_timeouts = 0;
        return state;
    }
    if (++state.consecutive_timeouts >= state.patience) {
        state.stage = std::min(state.stage + state.step, state.multiplier_cap);
        state.consecutive_timeouts = 0;
    }
    return state;
}

// ---------------------------------------------------------------------------
// Bundle loading

namespace {

const std::set<std::string> kTaskKeys = {
    "id", "description", "metric_name", "direction", "dev_fraction", "time_limit_dev",
    "time_limit_full", "runner", "solution_file", "baseline", "submission.columns",
    "submission.rows", "submission.numeric_columns"};

Task task_from_file(const KeyValueFile& kv, const fs::path& dir) {
    Task t;
    t.bundle_path = fs::absolute(dir);
    t.id = kv.get_string("id");
    t.metric_name = kv.get_string("metric_name");
    t.direction = parse_direction(kv.get_string("direction"));
    if (kv.has("description")) {
        t.description = kv.get_string("description");
    } else if (fs::exists(dir / "description.md")) {
        t.description = read_file(dir / "description.md");
    }
    if (kv.has("dev_fraction")) t.dev_fraction = kv.get_number("dev_fraction");
    if (kv.has("time_limit_dev")) t.time_limit_dev = kv.get_number("time_limit_dev");
    if (kv.has("time_limit_full")) t.time_limit_full = kv.get_number("time_limit_full");
    if (kv.has("runner")) t.runner = kv.get_string("runner");
    if (kv.has("solution_file")) t.solution_file = kv.get_string("solution_file");
    if (kv.has("baseline")) t.baseline_path = t.bundle_path / kv.get_string("baseline");
    if (kv.has("submission.columns")) t.schema.columns = kv.get_string_list("submission.columns");
    if (kv.has("submission.rows")) {
        const double rows = kv.get_number("submission.rows");
        if (rows < 0 || rows != std::floor(rows)) {
            throw Error(ErrorCode::ConfigError, "submission.rows must be a non-negative integer");
        }
        t.schema.rows = static_cast<std::size_t>(rows);
    }
    if (kv.has("submission.numeric_columns")) {
        t.schema.numeric_columns = kv.get_string_list("submission.numeric_columns");
    }
    if (t.solution_file.find('/') != std::string::npos) {
        throw Error(ErrorCode::ConfigError, "solution_file must be a bare file name");
    }
    t.check();
    return t;
}

std::optional<fs::path> resolve_program(const std::string& name) {
    if (name.find('/') != std::string::npos) {
        if (::access(name.c_str(), X_OK) == 0) return fs::path(name);
        return std::nullopt;
    }
    const char* path_env = std::getenv("PATH");
    const std::string path = path_env != nullptr ? path_env : "/usr/local/bin:/usr/bin:/bin";
    for (const auto& dir : split(path, ':')) {
        if (dir.empty()) continue;
        const fs::path candidate = fs::path(dir) / name;
        if (::access(candidate.c_str(), X_OK) == 0) return candidate;
    }
    return std::nullopt;
}

bool is_executable_file(const fs::path& p) {
    return fs::is_regular_file(p) && ::access(p.c_str(), X_OK) == 0;
}

}  // namespace

Task load_task(const fs::path& bundle_dir) {
    if (!fs::is_directory(bundle_dir)) {
        throw Error(ErrorCode::BundleMissing, "no task bundle at " + bundle_dir.string());
    }
    if (!fs::exists(bundle_dir / "task.toml")) {
        throw Error(ErrorCode::BundleMissing, "task.toml missing in " + bundle_dir.string());
    }
    if (!fs::exists(bundle_dir / "grade")) {
        throw Error(ErrorCode::BundleMissing, "grading script missing in " + bundle_dir.string());
    }
    try {
        return task_from_file(KeyValueFile::load(bundle_dir / "task.toml"), bundle_dir);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::BundleMissing) throw;
        throw Error(ErrorCode::BundleMissing, std::string("invalid task.toml: ") + e.what());
    }
}

bool derive_dev_split(const Task& task, std::uint64_t split_seed) {
    static std::mutex mu;
    std::lock_guard lock(mu);
    const fs::path dev = task.bundle_path / "data" / "dev";
    const fs::path full = task.bundle_path / "data" / "full";
    if (fs::exists(dev)) return false;
    if (!fs::is_directory(full)) {
        throw Error(ErrorCode::BundleMissing, "data/full missing in " + task.bundle_path.string());
    }
    const fs::path staging = task.bundle_path / "data" / ".dev.partial";
    fs::remove_all(staging);
    fs::create_directories(staging);
    for (const auto& entry : fs::directory_iterator(full)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        const fs::path out = staging / name;
        if (name.rfind("train", 0) != 0) {
            fs::copy_file(entry.path(), out);
            continue;
        }
        auto lines = split_lines(read_file(entry.path()));
        while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
        if (lines.empty()) {
            write_file(out, "");
            continue;
        }
        const std::string header = lines.front();
        std::vector<std::string> rows(lines.begin() + 1, lines.end());
        Rng rng(splitmix64(split_seed ^ 0xdeu));
        for (std::size_t i = rows.size(); i > 1; --i) {
            std::swap(rows[i - 1], rows[rng.uniform_index(i)]);
        }
        const auto keep = static_cast<std::size_t>(
            std::ceil(task.dev_fraction * static_cast<double>(rows.size())));
        std::string text = header + "\n";
        for (std::size_t i = 0; i < std::min(keep, rows.size()); ++i) text += rows[i] + "\n";
        write_file(out, text);
    }
    fs::rename(staging, dev);
    return true;
}

double parse_score_record(std::string_view stdout_text) {
    std::vector<std::string> lines;
    for (auto& l : split_lines(stdout_text)) {
        if (!trim(l).empty()) lines.push_back(trim(l));
    }
    if (lines.size() != 1) {
        throw Error(ErrorCode::GradeParseError,
                    "expected exactly one score record, got " + std::to_string(lines.size()) + " lines");
    }
    const auto& line = lines.front();
    if (line.rfind("SCORE ", 0) != 0) {
        throw Error(ErrorCode::GradeParseError, "malformed score record: " + line);
    }
    const std::string num = trim(line.substr(6));
    static const std::regex decimal(R"([+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?)");
    if (!std::regex_match(num, decimal)) {
        throw Error(ErrorCode::GradeParseError, "score is not a finite decimal: " + num);
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(num, &used);
    } catch (const std::exception&) {
        throw Error(ErrorCode::GradeParseError, "score is not a number: " + num);
    }
    if (used != num.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::GradeParseError, "score is not a finite decimal: " + num);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Permits

Permits::Permits(int running, int debugging, int feedback)
    : running_(running), debugging_(debugging), feedback_(feedback) {
    if (running < 1 || debugging < 1 || feedback < 1) {
        throw Error(ErrorCode::ConfigError, "semaphore sizes must be positive");
    }
}

Permits::Slot& Permits::slot(PermitKind kind) {
    switch (kind) {
        case PermitKind::Running: return running_;
        case PermitKind::Debugging: return debugging_;
        case PermitKind::Feedback: return feedback_;
    }
    return feedback_;
}

const Permits::Slot& Permits::slot(PermitKind kind) const {
    return const_cast<Permits*>(this)->slot(kind);
}

int Permits::limit(PermitKind kind) const { return slot(kind).limit; }
int Permits::peak(PermitKind kind) const { return slot(kind).peak.load(); }

Permits::Guard::Guard(Permits& owner, PermitKind kind) : owner_(owner), kind_(kind) {
    auto& s = owner_.slot(kind_);
    s.sem.acquire();
    const int now = ++s.in_use;
    int prev = s.peak.load();
    while (now > prev && !s.peak.compare_exchange_weak(prev, now)) {
    }
}

Permits::Guard::~Guard() {
    auto& s = owner_.slot(kind_);
    --s.in_use;
    s.sem.release();
}

// ---------------------------------------------------------------------------
// Landlock

namespace {

int landlock_abi() {
    static const int abi = [] {
        const long v = ::syscall(SYS_landlock_create_ruleset, nullptr, 0,
                                 LANDLOCK_CREATE_RULESET_VERSION);
        return v < 0 ? 0 : static_cast<int>(v);
    }();
    return abi;
}

std::uint64_t handled_fs_access(int abi) {
    std::uint64_t a = LANDLOCK_ACCESS_FS_EXECUTE | LANDLOCK_ACCESS_FS_WRITE_FILE |
                      LANDLOCK_ACCESS_FS_READ_FILE | LANDLOCK_ACCESS_FS_READ_DIR |
                      LANDLOCK_ACCESS_FS_REMOVE_DIR | LANDLOCK_ACCESS_FS_REMOVE_FILE |
                      LANDLOCK_ACCESS_FS_MAKE_CHAR | LANDLOCK_ACCESS_FS_MAKE_DIR |
                      LANDLOCK_ACCESS_FS_MAKE_REG | LANDLOCK_ACCESS_FS_MAKE_SOCK |
                      LANDLOCK_ACCESS_FS_MAKE_FIFO | LANDLOCK_ACCESS_FS_MAKE_BLOCK |
                      LANDLOCK_ACCESS_FS_MAKE_SYM;
    if (abi >= 2) a |= LANDLOCK_ACCESS_FS_REFER;
    if (abi >= 3) a |= LANDLOCK_ACCESS_FS_TRUNCATE;
    if (abi >= 5) a |= LANDLOCK_ACCESS_FS_IOCTL_DEV;
    return a;
}

class Ruleset {
public:
    Ruleset() = default;
    Ruleset(const Ruleset&) = delete;
    Ruleset& operator=(const Ruleset&) = delete;
    ~Ruleset() {
        if (fd_ >= 0) ::close(fd_);
    }

    bool create() {
        handled_ = handled_fs_access(landlock_abi());
        landlock_ruleset_attr attr{};
        attr.handled_access_fs = handled_;
        fd_ = static_cast<int>(::syscall(SYS_landlock_create_ruleset, &attr, sizeof attr, 0));
        return fd_ >= 0;
    }

    void allow(const fs::path& p, std::uint64_t access) {
        const int pfd = ::open(p.c_str(), O_PATH | O_CLOEXEC);
        if (pfd < 0) return;
        struct stat st {};
        if (::fstat(pfd, &st) == 0 && !S_ISDIR(st.st_mode)) {
            // Directory-only rights are invalid on a file rule.
            access &= LANDLOCK_ACCESS_FS_EXECUTE | LANDLOCK_ACCESS_FS_WRITE_FILE |
                      LANDLOCK_ACCESS_FS_READ_FILE | LANDLOCK_ACCESS_FS_TRUNCATE |
                      LANDLOCK_ACCESS_FS_IOCTL_DEV;
        }
        landlock_path_beneath_attr rule{};
        rule.allowed_access = access & handled_;
        rule.parent_fd = pfd;
        const long rc = ::syscall(SYS_landlock_add_rule, fd_, LANDLOCK_RULE_PATH_BENEATH, &rule, 0);
        ::close(pfd);
        if (rc != 0) {
            throw Error(ErrorCode::SandboxSpawnFailure,
                        "cannot add confinement rule for " + p.string() + ": " + std::strerror(errno));
        }
    }

    [[nodiscard]] int fd() const { return fd_; }
    [[nodiscard]] std::uint64_t handled() const { return handled_; }

private:
    int fd_ = -1;
    std::uint64_t handled_ = 0;
};

constexpr std::uint64_t kReadAccess =
    LANDLOCK_ACCESS_FS_EXECUTE | LANDLOCK_ACCESS_FS_READ_FILE | LANDLOCK_ACCESS_FS_READ_DIR;

// ---------------------------------------------------------------------------
// Child processes

struct ProcSpec {
    fs::path exe;
    std::vector<std::string> argv;
    std::vector<std::string> env;
    fs::path cwd;
    double timeout_seconds = 60.0;
    int ruleset_fd = -1;
    std::size_t keep_bytes = 1 << 20;
};

struct ProcOutcome {
    int exit_code = -1;
    int term_signal = 0;
    bool timed_out = false;
    std::string out;
    std::string err;
    std::size_t out_dropped = 0;
    std::size_t err_dropped = 0;
    double wall_seconds = 0.0;
};

void append_capped(std::string& buf, std::size_t& dropped, const char* data, std::size_t n,
                   std::size_t cap) {
    buf.append(data, n);
    if (buf.size() > 2 * cap) {
        const std::size_t cut = buf.size() - cap;
        buf.erase(0, cut);
        dropped += cut;
    }
}

ProcOutcome run_process(const ProcSpec& spec) {
    std::vector<char*> argv;
    for (const auto& a : spec.argv) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    std::vector<char*> envp;
    for (const auto& e : spec.env) envp.push_back(const_cast<char*>(e.c_str()));
    envp.push_back(nullptr);

    int out_pipe[2], err_pipe[2], status_pipe[2];
    if (::pipe2(out_pipe, O_CLOEXEC) != 0 || ::pipe2(err_pipe, O_CLOEXEC) != 0 ||
        ::pipe2(status_pipe, O_CLOEXEC) != 0) {
        throw Error(ErrorCode::SandboxSpawnFailure, std::string("pipe: ") + std::strerror(errno));
    }

    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) {
        throw Error(ErrorCode::SandboxSpawnFailure, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        // Only async-signal-safe calls from here to exec.
        ::setpgid(0, 0);
        const int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        struct rlimit no_core {0, 0};
        ::setrlimit(RLIMIT_CORE, &no_core);
        int stage = 0;
        if (::chdir(spec.cwd.c_str()) != 0) {
            stage = 1;
        } else if (spec.ruleset_fd >= 0) {
            if (::prctl(PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0) {
                stage = 2;
            } else if (::syscall(SYS_landlock_restrict_self, spec.ruleset_fd, 0) != 0) {
                stage = 3;
            }
        }
        if (stage == 0) {
            ::execve(spec.exe.c_str(), argv.data(), envp.data());
            stage = 4;
        }
        const int report[2] = {stage, errno};
        [[maybe_unused]] auto n = ::write(status_pipe[1], report, sizeof report);
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    ::close(status_pipe[1]);

    ProcOutcome res;
    const auto deadline =
        start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    std::chrono::duration<double>(spec.timeout_seconds));
    std::optional<std::chrono::steady_clock::time_point> drain_until;
    bool out_open = true, err_open = true;
    char buf[8192];
    while (out_open || err_open) {
        const auto now = std::chrono::steady_clock::now();
        if (!res.timed_out && now >= deadline) {
            res.timed_out = true;
            ::kill(-pid, SIGKILL);
            ::kill(pid, SIGKILL);
            drain_until = now + std::chrono::seconds(1);
        }
        if (drain_until && now >= *drain_until) break;
        const auto until = drain_until ? *drain_until : deadline;
        const auto wait_ms = std::max<long long>(
            1, std::chrono::duration_cast<std::chrono::milliseconds>(until - now).count());
        pollfd fds[2];
        int nfds = 0;
        if (out_open) fds[nfds++] = {out_pipe[0], POLLIN, 0};
        if (err_open) fds[nfds++] = {err_pipe[0], POLLIN, 0};
        const int rc = ::poll(fds, static_cast<nfds_t>(nfds), static_cast<int>(std::min(wait_ms, 200LL)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (int i = 0; i < nfds; ++i) {
            if ((fds[i].revents & (POLLIN | POLLHUP | POLLERR)) == 0) continue;
            const ssize_t n = ::read(fds[i].fd, buf, sizeof buf);
            const bool is_out = fds[i].fd == out_pipe[0];
            if (n <= 0) {
                (is_out ? out_open : err_open) = false;
            } else if (is_out) {
                append_capped(res.out, res.out_dropped, buf, static_cast<std::size_t>(n), spec.keep_bytes);
            } else {
                append_capped(res.err, res.err_dropped, buf, static_cast<std::size_t>(n), spec.keep_bytes);
            }
        }
    }
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);

    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    // Reap any leftovers of the process group.
    ::kill(-pid, SIGKILL);
    res.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    int report[2] = {0, 0};
    const ssize_t got = ::read(status_pipe[0], report, sizeof report);
    ::close(status_pipe[0]);
    if (got == static_cast<ssize_t>(sizeof report)) {
        static constexpr const char* what[] = {"", "chdir", "no_new_privs", "confinement", "exec"};
        throw Error(ErrorCode::SandboxSpawnFailure,
                    std::string(what[std::clamp(report[0], 0, 4)]) + " failed for " +
                        spec.exe.string() + ": " + std::strerror(report[1]));
    }
    if (WIFEXITED(status)) res.exit_code = WEXITSTATUS(status);
    if (WIFSIGNALED(status)) res.term_signal = WTERMSIG(status);
    return res;
}

std::string excerpt(const std::string& buf, std::size_t dropped, std::size_t cap) {
    if (dropped == 0) return tail_excerpt(buf, cap);
    const std::size_t local = buf.size() > cap ? buf.size() - cap : 0;
    return "[... truncated " + std::to_string(dropped + local) + " bytes ...]\n" + buf.substr(local);
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    if (from.empty()) return;
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
}

using Snapshot = std::map<std::string, std::pair<std::uintmax_t, std::int64_t>>;

Snapshot snapshot_tree(const fs::path& root) {
    Snapshot snap;
    std::error_code ec;
    for (fs::recursive_directory_iterator it(root, ec), end; it != end; it.increment(ec)) {
        if (ec) break;
        const auto& p = it->path();
        std::uintmax_t size = it->is_regular_file(ec) ? it->file_size(ec) : 0;
        const auto mtime = it->last_write_time(ec).time_since_epoch().count();
        snap[p.lexically_relative(root).string()] = {size, static_cast<std::int64_t>(mtime)};
    }
    return snap;
}

std::vector<std::string> snapshot_diff(const Snapshot& before, const Snapshot& after) {
    std::vector<std::string> changed;
    for (const auto& [k, v] : after) {
        auto it = before.find(k);
        if (it == before.end() || it->second != v) changed.push_back(k);
    }
    for (const auto& [k, v] : before) {
        if (!after.count(k)) changed.push_back(k);
    }
    return changed;
}

class ScratchDir {
public:
    ScratchDir(const fs::path& root, bool keep) : keep_(keep) {
        fs::create_directories(root);
        std::string tmpl = (root / "codeopt-XXXXXX").string();
        if (::mkdtemp(tmpl.data()) == nullptr) {
            throw Error(ErrorCode::SandboxSpawnFailure, "cannot create scratch directory under " +
                                                            root.string());
        }
        path_ = tmpl;
    }
    ~ScratchDir() {
        if (!keep_) {
            std::error_code ec;
            fs::remove_all(path_, ec);
        }
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;
    [[nodiscard]] const fs::path& path() const { return path_; }

private:
    fs::path path_;
    bool keep_;
};

}  // namespace

// ---------------------------------------------------------------------------

SeedEvalReport summarize_seeds(std::vector<std::uint64_t> seeds, std::vector<MaybeScore> scores) {
    if (seeds.size() != scores.size()) {
        throw Error(ErrorCode::LengthMismatch, "one score per seed required");
    }
    SeedEvalReport rep;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (scores[i]) {
            sum += *scores[i];
            ++n;
        } else {
            rep.failed_seeds.push_back(seeds[i]);
        }
    }
    if (n == 0) throw Error(ErrorCode::AllSeedsFailed, "no seed produced a score");
    rep.mean = sum / static_cast<double>(n);
    rep.seeds = std::move(seeds);
    rep.scores = std::move(scores);
    return rep;
}

Executor::Executor(ExecutorConfig cfg, Permits* permits) : cfg_(std::move(cfg)), permits_(permits) {}

bool Executor::confinement_available() const { return landlock_abi() >= 1; }

ExecResult Executor::execute(const Solution& solution, const Task& task, const ExecMode& mode,
                             const TimeoutState& timeout, std::string_view reference_code) {
    if (trim(solution.code).empty()) throw Error(ErrorCode::DomainError, "solution code is empty");
    timeout.check();
    const fs::path bundle = task.bundle_path;
    const fs::path grader = bundle / "grade";
    if (!fs::is_directory(bundle) || !fs::exists(grader)) {
        throw Error(ErrorCode::BundleMissing, "task bundle or grader missing at " + bundle.string());
    }
    if (mode.kind == ExecKind::DevSubset) derive_dev_split(task);
    const fs::path data_dir =
        bundle / "data" / (mode.kind == ExecKind::DevSubset ? "dev" : "full");
    if (!fs::is_directory(data_dir)) {
        throw Error(ErrorCode::BundleMissing, "data directory missing: " + data_dir.string());
    }
    const auto runner = resolve_program(task.runner);
    if (!runner) throw Error(ErrorCode::SandboxSpawnFailure, "runner not found: " + task.runner);

    ScratchDir scratch(cfg_.work_root, cfg_.keep_scratch);
    const fs::path scratch_path = fs::canonical(scratch.path());
    write_file(scratch_path / task.solution_file, solution.code);
    const fs::path output = scratch_path / "submission.csv";

    ProcSpec spec;
    spec.exe = *runner;
    spec.argv = {task.runner, task.solution_file};
    spec.env = {"PATH=/usr/local/bin:/usr/bin:/bin",
                "HOME=" + scratch_path.string(),
                "TMPDIR=" + scratch_path.string(),
                "LANG=C.UTF-8",
                "PYTHONDONTWRITEBYTECODE=1",
                "PYTHONHASHSEED=0",
                "TASK_DATA_DIR=" + data_dir.string(),
                "OUTPUT_PATH=" + output.string(),
                "SEED=" + std::to_string(mode.seed)};
    spec.cwd = scratch_path;
    const double base = mode.kind == ExecKind::DevSubset ? task.time_limit_dev : task.time_limit_full;
    spec.timeout_seconds = base * timeout.multiplier();

    Ruleset rules;
    bool confined = false;
    if (cfg_.confine && confinement_available() && rules.create()) {
        for (const auto& root : cfg_.readable_roots) {
            if (fs::exists(root)) rules.allow(root, kReadAccess);
        }
        rules.allow(runner->parent_path(), kReadAccess);
        rules.allow(data_dir, kReadAccess);
        rules.allow(scratch_path, rules.handled());
        const std::uint64_t dev_access = kReadAccess | LANDLOCK_ACCESS_FS_WRITE_FILE |
                                         LANDLOCK_ACCESS_FS_TRUNCATE | LANDLOCK_ACCESS_FS_IOCTL_DEV;
        rules.allow("/dev", dev_access);
        spec.ruleset_fd = rules.fd();
        confined = true;
    }

    const Snapshot before = snapshot_tree(bundle);
    ProcOutcome proc;
    {
        std::optional<Permits::Guard> permit;
        if (permits_ != nullptr) permit.emplace(*permits_, PermitKind::Running);
        proc = run_process(spec);
    }
    const auto changed = snapshot_diff(before, snapshot_tree(bundle));

    ExecResult res;
    auto& tr = res.trace;
    tr.wall_seconds = proc.wall_seconds;
    std::ostringstream log;
    log << "mode=" << to_string(mode.kind) << " seed=" << mode.seed << " limit="
        << format_double(spec.timeout_seconds) << "s (x" << timeout.multiplier() << ")"
        << " confinement=" << (confined ? "on" : "off") << "\n";

    if (proc.timed_out) {
        tr.exit_status = ExitStatus::Timeout;
    } else if (proc.term_signal == SIGKILL || proc.term_signal == SIGXCPU ||
               proc.term_signal == SIGXFSZ) {
        tr.exit_status = ExitStatus::ResourceKill;
    } else if (proc.term_signal != 0 || proc.exit_code != 0) {
        tr.exit_status = ExitStatus::NonzeroExit;
    }
    if (!changed.empty()) {
        res.sandbox_violation = true;
        if (tr.exit_status == ExitStatus::Ok) tr.exit_status = ExitStatus::NonzeroExit;
        std::string msg = "\nsandbox violation: bundle modified:";
        for (const auto& c : changed) msg += " " + c;
        proc.err += msg + "\n";
    }
    log << "exit=" << to_string(tr.exit_status);
    if (proc.term_signal != 0) log << " signal=" << proc.term_signal;
    else if (!proc.timed_out) log << " code=" << proc.exit_code;
    log << "\n";

    const std::string scratch_str = scratch_path.string();
    replace_all(proc.out, scratch_str, "$SCRATCH");
    replace_all(proc.err, scratch_str, "$SCRATCH");
    tr.stdout_excerpt = excerpt(proc.out, proc.out_dropped, cfg_.excerpt_bytes);
    tr.stderr_excerpt = excerpt(proc.err, proc.err_dropped, cfg_.excerpt_bytes);
    if (!reference_code.empty()) tr.code_diff = unified_diff(reference_code, solution.code);

    if (tr.exit_status == ExitStatus::Ok) {
        if (!fs::exists(output)) {
            log << "no submission written\n";
        } else {
            res.submission = read_file(output);
            auto run_grader = [&](const fs::path& script) {
                ProcSpec g;
                g.exe = script;
                g.argv = {script.string(), output.string(), "--seed", std::to_string(mode.seed)};
                g.env = {"PATH=/usr/local/bin:/usr/bin:/bin", "LANG=C.UTF-8",
                         "PYTHONDONTWRITEBYTECODE=1", "HOME=" + scratch_str, "TMPDIR=" + scratch_str};
                g.cwd = bundle;
                g.timeout_seconds = cfg_.grader_timeout;
                return run_process(g);
            };
            const auto graded = run_grader(grader);
            if (graded.timed_out) {
                log << "grader timed out\n";
            } else if (graded.exit_code != 0 || graded.term_signal != 0) {
                std::string gerr = graded.err;
                replace_all(gerr, scratch_str, "$SCRATCH");
                log << "grader rejected submission (exit " << graded.exit_code << ")\n"
                    << tail_excerpt(gerr, 1000);
            } else {
                res.score = parse_score_record(graded.out);
                log << "SCORE " << format_double(*res.score) << "\n";
                const fs::path holdout = bundle / "grade_holdout";
                if (is_executable_file(holdout)) {
                    const auto h = run_grader(holdout);
                    if (!h.timed_out && h.exit_code == 0 && h.term_signal == 0) {
                        res.holdout_score = parse_score_record(h.out);
                    }
                }
            }
        }
    }
    tr.runtime_log = log.str();
    return res;
}

std::pair<Solution, ExecResult> Executor::debug_loop(Solution solution, const Task& task,
                                                     const ExecMode& mode, int max_fix_iters,
                                                     OracleClient& oracle, TimeoutState& timeout) {
    if (max_fix_iters < 0) throw Error(ErrorCode::DomainError, "max_fix_iters must be non-negative");
    std::optional<Permits::Guard> permit;
    if (permits_ != nullptr) permit.emplace(*permits_, PermitKind::Debugging);

    const std::string original = solution.code;
    for (int fixes = 0;; ++fixes) {
        auto result = execute(solution, task, mode, timeout, original);
        timeout = escalate_timeout(timeout, result.trace.exit_status);
        if (result.trace.exit_status == ExitStatus::Ok) return {std::move(solution), std::move(result)};
        if (fixes == max_fix_iters) throw DebugExhausted(solution, result, fixes);

        const auto reply = oracle.ask(OracleRole::DebugFix,
                                      {{"task_description", task.description},
                                       {"code", solution.code},
                                       {"stderr_tail", result.trace.stderr_excerpt},
                                       {"diff", result.trace.code_diff},
                                       {"attempt", std::to_string(fixes + 1)}});
        const auto fixed = strip_code_fence(reply.text);
        if (!trim(fixed).empty()) solution.code = fixed;
    }
}

SeedEvalReport Executor::multi_seed_eval(const Solution& solution, const Task& task,
                                         const std::vector<std::uint64_t>& seeds,
                                         const TimeoutState& timeout) {
    if (seeds.empty()) throw Error(ErrorCode::DomainError, "multi-seed evaluation needs seeds");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        throw Error(ErrorCode::DomainError, "seeds must be distinct");
    }
    std::vector<MaybeScore> scores;
    for (auto seed : seeds) {
        scores.push_back(execute(solution, task, {ExecKind::FullData, seed}, timeout).score);
    }
    return summarize_seeds(seeds, std::move(scores));
}

// ---------------------------------------------------------------------------
// Lint

LintReport lint_bundle(const fs::path& bundle_dir, const LintOptions& opts) {
    LintReport rep;
    if (!fs::is_directory(bundle_dir)) {
        rep.errors.push_back("bundle directory does not exist");
        return rep;
    }
    if (!fs::exists(bundle_dir / "task.toml")) {
        rep.errors.push_back("task.toml missing");
        return rep;
    }
    std::optional<Task> task;
    try {
        const auto kv = KeyValueFile::load(bundle_dir / "task.toml");
        for (const auto& [key, value] : kv.values()) {
            if (!kTaskKeys.count(key)) rep.warnings.push_back("unknown task.toml key '" + key + "'");
        }
        task = task_from_file(kv, bundle_dir);
        if (!kv.has("submission.columns")) {
            rep.warnings.push_back("no [submission] columns declared; format checks are limited");
        }
    } catch (const Error& e) {
        rep.errors.push_back(std::string("task.toml: ") + e.what());
    }

    const fs::path grade = bundle_dir / "grade";
    if (!fs::exists(grade)) {
        rep.errors.push_back("grade script missing");
    } else if (!is_executable_file(grade)) {
        rep.errors.push_back("grade script is not executable");
    }
    const fs::path full = bundle_dir / "data" / "full";
    if (!fs::is_directory(full) || fs::is_empty(full)) {
        rep.errors.push_back("data/full missing or empty");
    }
    if (!fs::is_directory(bundle_dir / "data" / "dev")) {
        rep.warnings.push_back("data/dev absent; it will be derived from data/full");
    }
    if (!fs::is_directory(bundle_dir / "grading")) {
        rep.warnings.push_back("no grading/ directory for held-out labels");
    } else if (fs::is_directory(bundle_dir / "data")) {
        std::set<std::string> held_out;
        for (const auto& e : fs::recursive_directory_iterator(bundle_dir / "grading")) {
            if (e.is_regular_file()) held_out.insert(e.path().filename().string());
        }
        for (const auto& e : fs::recursive_directory_iterator(bundle_dir / "data")) {
            if (e.is_regular_file() && held_out.count(e.path().filename().string())) {
                rep.errors.push_back("held-out file " + e.path().filename().string() +
                                     " is visible under data/");
            }
        }
    }
    if (task) {
        if (!resolve_program(task->runner)) {
            rep.errors.push_back("runner '" + task->runner + "' not found on PATH");
        }
        if (task->baseline_path && !fs::is_regular_file(*task->baseline_path)) {
            rep.errors.push_back("declared baseline " + task->baseline_path->string() + " missing");
        }
    }

    if (opts.run_baseline && rep.ok()) {
        if (!task->baseline_path) {
            rep.errors.push_back("no baseline declared to run");
            return rep;
        }
        try {
            Executor ex;
            Solution base{"baseline", read_file(*task->baseline_path), {}, {}, 0};
            const auto first = ex.execute(base, *task, {ExecKind::FullData, 0}, {});
            if (!first.score) {
                rep.errors.push_back("baseline produced no score: " + first.trace.runtime_log +
                                     first.trace.stderr_excerpt);
            } else {
                rep.baseline_score = first.score;
                const auto again = ex.execute(base, *task, {ExecKind::FullData, 0}, {});
                if (again.score != first.score) {
                    rep.errors.push_back("grading is not deterministic for a fixed seed");
                }
            }
        } catch (const Error& e) {
            rep.errors.push_back(std::string("baseline run: ") + e.what());
        }
    }
    return rep;
}

}  // namespace codeopt
