#include "smartpoc/harness.hpp"

#include "smartpoc/errors.hpp"
#include "smartpoc/text_util.hpp"

#include "json.hpp"
#ifdef SMARTPOC_WITH_TLS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace smartpoc {

namespace {

std::string workspace_dir_name(const std::string& finding_id)
{
    std::string name;
    for (char c : finding_id) {
        bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ||
                    c == '.';
        name.push_back(keep ? c : '-');
    }
    if (name.empty() || name != finding_id) {
        std::ostringstream tag;
        tag << std::hex << std::hash<std::string>{}(finding_id);
        name += "-" + tag.str();
    }
    return name;
}

std::string toml_quote(const std::string& s)
{
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\')
            out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string render_foundry_toml(const Workspace& ws)
{
    std::ostringstream out;
    out << "[profile.default]\n";
    out << "src = \"src\"\n";
    out << "test = \"test\"\n";
    out << "solc = " << toml_quote(ws.compiler_version) << "\n";
    if (ws.legacy_abi_encoder)
        out << "abi_encoder_v2 = true\n";
    out << "remappings = [";
    for (std::size_t i = 0; i < ws.remappings.size(); ++i) {
        if (i)
            out << ", ";
        out << toml_quote(ws.remappings[i]);
    }
    out << "]\n";
    return out.str();
}

/// Splits "scheme://host:port/path" into a client base and a request path.
std::pair<std::string, std::string> split_url(const std::string& url)
{
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("fork URL must include a scheme: " + url);
    auto path_pos = url.find('/', scheme_end + 3);
    if (path_pos == std::string::npos)
        return {url, "/"};
    return {url.substr(0, path_pos), url.substr(path_pos)};
}

struct CommandResult {
    int exit_code = -1;
    std::string output;
    bool timed_out = false;
};

[[noreturn]] void child_exec(const std::vector<std::string>& argv, const fs::path& cwd,
                             int out_fd, int status_fd)
{
    if (dup2(out_fd, STDOUT_FILENO) < 0 || dup2(out_fd, STDERR_FILENO) < 0)
        _exit(127);
    std::vector<char*> args;
    args.reserve(argv.size() + 1);
    for (const auto& a : argv)
        args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    if (chdir(cwd.c_str()) != 0) {
        int err = errno;
        [[maybe_unused]] auto n = write(status_fd, &err, sizeof(err));
        _exit(127);
    }
    execvp(args[0], args.data());
    int err = errno;
    [[maybe_unused]] auto n = write(status_fd, &err, sizeof(err));
    _exit(127);
}

CommandResult run_command(const std::vector<std::string>& argv, const fs::path& cwd,
                          double timeout_seconds)
{
    int out_pipe[2];
    int status_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(status_pipe) != 0)
        throw StageError("harness", "pipe creation failed: " + std::string(strerror(errno)));
    fcntl(status_pipe[1], F_SETFD, FD_CLOEXEC);

    pid_t pid = fork();
    if (pid < 0)
        throw StageError("harness", "fork failed: " + std::string(strerror(errno)));
    if (pid == 0) {
        close(out_pipe[0]);
        close(status_pipe[0]);
        child_exec(argv, cwd, out_pipe[1], status_pipe[1]);
    }
    close(out_pipe[1]);
    close(status_pipe[1]);

    // Blocks until exec succeeds (EOF) or the child reports an errno.
    int exec_errno = 0;
    auto status_read = read(status_pipe[0], &exec_errno, sizeof(exec_errno));
    close(status_pipe[0]);
    if (status_read == static_cast<ssize_t>(sizeof(exec_errno))) {
        close(out_pipe[0]);
        int ignored = 0;
        waitpid(pid, &ignored, 0);
        throw EnvironmentError("cannot execute '" + argv[0] +
                               "': " + std::string(strerror(exec_errno)));
    }

    CommandResult result;
    auto deadline =
        std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
    char buffer[4096];
    while (true) {
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                             deadline - std::chrono::steady_clock::now())
                             .count();
        if (remaining <= 0) {
            result.timed_out = true;
            kill(pid, SIGKILL);
            break;
        }
        pollfd pfd{out_pipe[0], POLLIN, 0};
        int ready = poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining, 60000)));
        if (ready < 0) {
            if (errno == EINTR)
                continue;
            break;
        }
        if (ready == 0)
            continue;
        auto n = read(out_pipe[0], buffer, sizeof(buffer));
        if (n <= 0)
            break;
        result.output.append(buffer, static_cast<std::size_t>(n));
    }
    close(out_pipe[0]);

    int status = 0;
    waitpid(pid, &status, 0);
    if (WIFEXITED(status))
        result.exit_code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status))
        result.exit_code = 128 + WTERMSIG(status);
    return result;
}

Diagnostics diagnostics_from(Diagnostics::Phase phase, bool success, std::string raw,
                             const std::string& fallback_raw)
{
    Diagnostics d;
    d.phase = phase;
    d.success = success;
    d.raw = std::move(raw);
    if (!d.success && trim(d.raw).empty())
        d.raw = fallback_raw;
    d.items = extract_failure_items(d.raw, phase);
    return d;
}

std::optional<std::pair<std::string, int>> parse_file_line(const std::string& text)
{
    // Matches the trailing "<path>:<line>" of strings like
    // "src/A.sol:12:5:" or "--> test/X.t.sol:10:3".
    auto candidate = trim(text);
    while (!candidate.empty() && (candidate.back() == ':' || candidate.back() == ' '))
        candidate.pop_back();
    // Drop a trailing ":<column>" when present.
    auto parts = split(candidate, ':');
    if (parts.size() < 2)
        return std::nullopt;
    auto is_number = [](const std::string& s) {
        return !s.empty() &&
               std::all_of(s.begin(), s.end(),
                           [](unsigned char c) { return std::isdigit(c); });
    };
    std::size_t line_idx = parts.size();
    if (parts.size() >= 3 && is_number(parts[parts.size() - 1]) &&
        is_number(parts[parts.size() - 2]))
        line_idx = parts.size() - 2;
    else if (is_number(parts[parts.size() - 1]))
        line_idx = parts.size() - 1;
    else
        return std::nullopt;
    std::string file;
    for (std::size_t i = 0; i < line_idx; ++i) {
        if (i)
            file += ":";
        file += parts[i];
    }
    file = trim(file);
    if (file.empty())
        return std::nullopt;
    return std::make_pair(file, std::stoi(parts[line_idx]));
}

} // namespace

bool is_valid_utf8(const std::string& text)
{
    std::size_t i = 0;
    auto cont = [&](std::size_t k) {
        for (std::size_t j = 1; j <= k; ++j) {
            unsigned char c = static_cast<unsigned char>(text[i + j]);
            if ((c & 0xC0) != 0x80)
                return false;
        }
        return true;
    };
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (c < 0x80) {
            ++i;
        } else if ((c & 0xE0) == 0xC0) {
            if (c < 0xC2 || i + 1 >= text.size() || !cont(1))
                return false;
            i += 2;
        } else if ((c & 0xF0) == 0xE0) {
            if (i + 2 >= text.size() || !cont(2))
                return false;
            unsigned char c1 = static_cast<unsigned char>(text[i + 1]);
            if (c == 0xE0 && c1 < 0xA0)
                return false; // overlong
            if (c == 0xED && c1 >= 0xA0)
                return false; // surrogate range
            i += 3;
        } else if ((c & 0xF8) == 0xF0) {
            if (c > 0xF4 || i + 3 >= text.size() || !cont(3))
                return false;
            unsigned char c1 = static_cast<unsigned char>(text[i + 1]);
            if (c == 0xF0 && c1 < 0x90)
                return false; // overlong
            if (c == 0xF4 && c1 >= 0x90)
                return false; // beyond U+10FFFF
            i += 4;
        } else {
            return false;
        }
    }
    return true;
}

std::vector<Diagnostics::Item> extract_failure_items(const std::string& raw,
                                                     Diagnostics::Phase phase)
{
    std::vector<Diagnostics::Item> items;
    auto lines = split_lines(raw);
    if (phase == Diagnostics::Phase::Compile) {
        for (std::size_t i = 0; i < lines.size(); ++i) {
            auto t = trim(lines[i]);
            // New solc style: "Error (7576): message" followed by
            // "  --> file:line:col:".
            if (starts_with(t, "Error") && t.find(':') != std::string::npos) {
                Diagnostics::Item item;
                item.message = t;
                for (std::size_t j = i + 1; j < lines.size() && j <= i + 3; ++j) {
                    auto arrow = lines[j].find("-->");
                    if (arrow == std::string::npos)
                        continue;
                    if (auto loc = parse_file_line(lines[j].substr(arrow + 3))) {
                        item.file = loc->first;
                        item.line = loc->second;
                    }
                    break;
                }
                items.push_back(std::move(item));
                continue;
            }
            // Old solc style: "file.sol:12:5: Error: message".
            auto marker = t.find(": Error");
            if (marker != std::string::npos) {
                if (auto loc = parse_file_line(t.substr(0, marker))) {
                    Diagnostics::Item item;
                    item.message = trim(t.substr(marker + 2));
                    item.file = loc->first;
                    item.line = loc->second;
                    items.push_back(std::move(item));
                }
            }
        }
    } else {
        for (const auto& line : lines) {
            auto t = trim(line);
            if (t.find("[FAIL") != std::string::npos || starts_with(t, "Error:") ||
                t.find("EvmError") != std::string::npos) {
                Diagnostics::Item item;
                item.message = t;
                items.push_back(std::move(item));
            }
        }
    }
    return items;
}

long long fetch_head_block(const std::string& rpc_url)
{
#ifndef SMARTPOC_WITH_TLS
    if (starts_with(rpc_url, "https://"))
        throw ConfigError("this build lacks TLS support; use an http:// fork URL");
#endif
    auto [base, path] = split_url(rpc_url);
    httplib::Client client(base);
    client.set_connection_timeout(10);
    client.set_read_timeout(30);
    nlohmann::json request = {{"jsonrpc", "2.0"},
                              {"id", 1},
                              {"method", "eth_blockNumber"},
                              {"params", nlohmann::json::array()}};
    auto res = client.Post(path, request.dump(), "application/json");
    if (!res)
        throw EnvironmentError("fork endpoint unreachable: " + rpc_url + " (" +
                               httplib::to_string(res.error()) + ")");
    if (res->status < 200 || res->status >= 300)
        throw EnvironmentError("fork endpoint returned HTTP " + std::to_string(res->status) +
                               ": " + rpc_url);
    auto body = nlohmann::json::parse(res->body, nullptr, false);
    if (body.is_discarded() || !body.contains("result") || !body["result"].is_string())
        throw EnvironmentError("malformed eth_blockNumber response from " + rpc_url);
    std::string hex = body["result"].get<std::string>();
    if (starts_with(hex, "0x"))
        hex = hex.substr(2);
    try {
        return std::stoll(hex, nullptr, 16);
    } catch (const std::exception&) {
        throw EnvironmentError("unparseable block number from " + rpc_url + ": 0x" + hex);
    }
}

Workspace init_workspace(const Finding& f, const BugContextBundle& bundle,
                         const SourceModel& model, const WorkspaceOptions& options)
{
    if (!bundle.build_metadata.compiler_version)
        throw StageError("harness", "bundle for " + f.id + " carries no compiler version");
    if (model.files.empty())
        throw StageError("harness", "source model for " + f.id + " has no files");

    Workspace ws;
    ws.finding_id = f.id;
    ws.root = options.base_dir / workspace_dir_name(f.id);
    ws.compiler_version = *bundle.build_metadata.compiler_version;
    ws.remappings = bundle.build_metadata.remappings;
    auto version = version_major_minor(ws.compiler_version);
    ws.legacy_abi_encoder = version && (version->first == 0 && version->second < 8);
    ws.test_contract_name = bundle.target_contract + "PoC";
    ws.test_file = ws.root / "test" / (ws.test_contract_name + ".t.sol");

    std::error_code ec;
    fs::remove_all(ws.root, ec);
    try {
        fs::create_directories(ws.root / "test");
        for (const auto& file : model.files) {
            auto dest = ws.root / "src" / file.path;
            fs::create_directories(dest.parent_path());
            write_file(dest.string(), file.text);
        }
    } catch (const fs::filesystem_error& e) {
        throw StageError("harness",
                         "workspace setup for " + f.id + " failed: " + std::string(e.what()));
    }

    if (options.fork_url) {
        ForkConfig fork;
        fork.rpc_url = *options.fork_url;
        if (options.query_head_block)
            fork.head_block = fetch_head_block(fork.rpc_url);
        ws.fork = fork;
    }

    write_file((ws.root / "foundry.toml").string(), render_foundry_toml(ws));
    return ws;
}

void write_test(const Workspace& ws, const std::string& text)
{
    if (!is_valid_utf8(text))
        throw StageError("harness",
                         "draft for " + ws.finding_id + " rejected: not valid UTF-8");
    write_file(ws.test_file.string(), text);
}

ExecutionOutcome execute(Executor& executor, const Workspace& ws)
{
    ExecutionOutcome out;
    out.compile_diag = executor.compile(ws);
    out.ok_compile = out.compile_diag.success;
    if (!out.ok_compile)
        return out;
    auto run = executor.run_tests(ws);
    out.runtime_diag = run.diag;
    out.ok_run = run.diag.success;
    out.logs = std::move(run.logs);
    return out;
}

SubprocessExecutor::SubprocessExecutor(SubprocessConfig config) : config_(std::move(config)) {}

Diagnostics SubprocessExecutor::compile(const Workspace& ws)
{
    auto result = run_command({config_.forge_path, "build"}, ws.root, config_.timeout_seconds);
    std::string raw = result.output;
    if (result.timed_out)
        raw += "\ncompile timed out after " + std::to_string(config_.timeout_seconds) + " s";
    bool ok = !result.timed_out && result.exit_code == 0;
    return diagnostics_from(Diagnostics::Phase::Compile, ok, std::move(raw),
                            "compilation failed with exit code " +
                                std::to_string(result.exit_code) + " and no output");
}

RunResult SubprocessExecutor::run_tests(const Workspace& ws)
{
    std::vector<std::string> argv = {config_.forge_path, "test", "-vvvv"};
    if (ws.fork) {
        argv.push_back("--fork-url");
        argv.push_back(ws.fork->rpc_url);
    }
    auto result = run_command(argv, ws.root, config_.timeout_seconds);
    std::string raw = result.output;
    if (result.timed_out)
        raw += "\ntest run timed out after " + std::to_string(config_.timeout_seconds) + " s";
    bool ok = !result.timed_out && result.exit_code == 0;
    RunResult run;
    run.diag = diagnostics_from(Diagnostics::Phase::Runtime, ok, std::move(raw),
                                "test run failed with exit code " +
                                    std::to_string(result.exit_code) + " and no output");
    run.logs = split_lines(result.output);
    return run;
}

FakeExecutor::FakeExecutor(const std::string& script_path)
{
    std::ifstream in(script_path);
    if (!in)
        throw ConfigError("cannot open executor script: " + script_path);
    std::string line;
    int line_no = 0;
    std::map<std::string, std::set<int>> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        auto record = nlohmann::json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object())
            throw ParseError(script_path, line_no, "malformed executor script record");
        if (!record.contains("finding") || !record["finding"].is_string() ||
            record["finding"].get<std::string>().empty())
            throw ParseError(script_path, line_no, "executor record needs a finding id");
        if (!record.contains("attempt") || !record["attempt"].is_number_integer())
            throw ParseError(script_path, line_no, "executor record needs an attempt index");
        if (!record.contains("ok_compile") || !record["ok_compile"].is_boolean())
            throw ParseError(script_path, line_no, "executor record needs ok_compile");
        std::string finding = record["finding"].get<std::string>();
        Round round;
        round.attempt = record["attempt"].get<int>();
        if (round.attempt < 0)
            throw ParseError(script_path, line_no, "attempt index must be non-negative");
        if (!seen[finding].insert(round.attempt).second)
            throw ParseError(script_path, line_no,
                             "duplicate attempt " + std::to_string(round.attempt) + " for " +
                                 finding);
        round.ok_compile = record["ok_compile"].get<bool>();
        round.compile_output = record.value("compile_output", std::string());
        round.ok_run = record.value("ok_run", false);
        round.run_output = record.value("run_output", std::string());
        if (record.contains("logs")) {
            if (!record["logs"].is_array())
                throw ParseError(script_path, line_no, "logs must be an array of strings");
            for (const auto& entry : record["logs"]) {
                if (!entry.is_string())
                    throw ParseError(script_path, line_no, "logs must be an array of strings");
                round.logs.push_back(entry.get<std::string>());
            }
        }
        rounds_[finding].push_back(std::move(round));
    }
    for (auto& [finding, rounds] : rounds_)
        std::sort(rounds.begin(), rounds.end(),
                  [](const Round& a, const Round& b) { return a.attempt < b.attempt; });
}

void FakeExecutor::set_delay_seconds(double seconds)
{
    std::lock_guard<std::mutex> lock(mutex_);
    delay_seconds_ = seconds;
}

int FakeExecutor::peak_in_flight() const
{
    std::lock_guard<std::mutex> lock(mutex_);
    return peak_in_flight_;
}

void FakeExecutor::enter()
{
    double delay = 0.0;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        ++in_flight_;
        peak_in_flight_ = std::max(peak_in_flight_, in_flight_);
        delay = delay_seconds_;
    }
    if (delay > 0)
        std::this_thread::sleep_for(std::chrono::duration<double>(delay));
}

void FakeExecutor::leave()
{
    std::lock_guard<std::mutex> lock(mutex_);
    --in_flight_;
}

Diagnostics FakeExecutor::compile(const Workspace& ws)
{
    enter();
    Diagnostics d;
    try {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = rounds_.find(ws.finding_id);
        if (it == rounds_.end())
            throw TranscriptError("executor script has no rounds for " + ws.finding_id);
        auto& cursor = cursor_[ws.finding_id];
        if (cursor >= it->second.size())
            throw TranscriptError("executor script exhausted for " + ws.finding_id);
        const Round& round = it->second[cursor];
        last_compiled_[ws.finding_id] = cursor;
        ++cursor;
        d = diagnostics_from(Diagnostics::Phase::Compile, round.ok_compile,
                             round.compile_output, "compilation failed (scripted)");
    } catch (...) {
        leave();
        throw;
    }
    leave();
    return d;
}

RunResult FakeExecutor::run_tests(const Workspace& ws)
{
    enter();
    RunResult run;
    try {
        std::lock_guard<std::mutex> lock(mutex_);
        const Round& round = current_round(ws.finding_id);
        run.diag = diagnostics_from(Diagnostics::Phase::Runtime, round.ok_run,
                                    round.run_output, "test run failed (scripted)");
        run.logs = round.logs;
    } catch (...) {
        leave();
        throw;
    }
    leave();
    return run;
}

const FakeExecutor::Round& FakeExecutor::current_round(const std::string& finding_id) const
{
    auto compiled = last_compiled_.find(finding_id);
    if (compiled == last_compiled_.end())
        throw TranscriptError("run_tests before any compile for " + finding_id);
    const Round& round = rounds_.at(finding_id)[compiled->second];
    if (!round.ok_compile)
        throw TranscriptError("run_tests after a failed compile for " + finding_id);
    return round;
}

} // namespace smartpoc
