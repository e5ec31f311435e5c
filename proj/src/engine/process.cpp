/*
 * Copyright 2026 The cellkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cellkit/engine/process.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <map>

#include "cellkit/core/error.hpp"

extern char** environ;

namespace cellkit::engine {
namespace {

int decode_status(int raw) {
  if (WIFEXITED(raw)) return WEXITSTATUS(raw);
  if (WIFSIGNALED(raw)) return 128 + WTERMSIG(raw);
  return 255;
}

}  // namespace

ChildProcess::ChildProcess(const SpawnOptions& options) {
  if (options.argv.empty()) fail(ErrorCode::kLaunchFailed, "empty command");

  // Everything the child needs is prepared before fork: only
  // async-signal-safe calls are made between fork and exec.
  std::map<std::string, std::string> merged;
  for (char** e = environ; e && *e; ++e) {
    std::string kv = *e;
    auto eq = kv.find('=');
    if (eq != std::string::npos) merged[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  for (const auto& [k, v] : options.env) merged[k] = v;
  std::vector<std::string> env_strings;
  for (const auto& [k, v] : merged) env_strings.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& s : env_strings) envp.push_back(s.data());
  envp.push_back(nullptr);
  std::vector<std::string> argv_strings = options.argv;
  std::vector<char*> argv;
  for (auto& s : argv_strings) argv.push_back(s.data());
  argv.push_back(nullptr);
  const std::string cwd = options.cwd.string();
  const std::string log = options.log_file.empty() ? "/dev/null" : options.log_file.string();

  int report[2];
  if (::pipe2(report, O_CLOEXEC) != 0) fail(ErrorCode::kLaunchFailed, "pipe: " + std::string(std::strerror(errno)));

  pid_t pid = ::fork();
  if (pid < 0) {
    ::close(report[0]);
    ::close(report[1]);
    fail(ErrorCode::kLaunchFailed, "fork: " + std::string(std::strerror(errno)));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    int err = 0;
    if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) err = errno;
    if (err == 0) {
      int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
      int devnull = ::open("/dev/null", O_RDONLY);
      if (fd < 0 || devnull < 0) {
        err = errno;
      } else {
        ::dup2(devnull, 0);
        ::dup2(fd, 1);
        ::dup2(fd, 2);
      }
    }
    if (err == 0) {
      ::execve(argv[0], argv.data(), envp.data());
      err = errno;
    }
    ssize_t ignored = ::write(report[1], &err, sizeof(err));
    (void)ignored;
    ::_exit(127);
  }
  ::setpgid(pid, pid);  // also set from the parent to close the race
  ::close(report[1]);
  int child_err = 0;
  ssize_t n;
  do {
    n = ::read(report[0], &child_err, sizeof(child_err));
  } while (n < 0 && errno == EINTR);
  ::close(report[0]);
  pid_ = pid;
  if (n == sizeof(child_err)) {
    int raw = 0;
    ::waitpid(pid, &raw, 0);
    fail(ErrorCode::kLaunchFailed, options.argv[0] + ": " + std::strerror(child_err));
  }
  watcher_ = std::thread([this] { watch(); });
}

ChildProcess::~ChildProcess() {
  if (running()) terminate(std::chrono::milliseconds(500));
  if (watcher_.joinable()) watcher_.join();
}

void ChildProcess::watch() {
  // Observe the exit without reaping, so the pid stays valid for kill()
  // until status_ is published under the lock.
  siginfo_t info{};
  while (::waitid(P_PID, static_cast<id_t>(pid_), &info, WEXITED | WNOWAIT) != 0 && errno == EINTR) {
  }
  std::lock_guard lk(mu_);
  int raw = 0;
  while (::waitpid(pid_, &raw, 0) < 0 && errno == EINTR) {
  }
  status_ = decode_status(raw);
  cv_.notify_all();
}

bool ChildProcess::running() const {
  std::lock_guard lk(mu_);
  return !status_.has_value();
}

std::optional<int> ChildProcess::exit_status() const {
  std::lock_guard lk(mu_);
  return status_;
}

bool ChildProcess::wait_for_exit(std::chrono::milliseconds timeout) const {
  std::unique_lock lk(mu_);
  return cv_.wait_for(lk, timeout, [&] { return status_.has_value(); });
}

int ChildProcess::terminate(std::chrono::milliseconds grace) {
  {
    std::lock_guard lk(mu_);
    if (status_) return *status_;
    ::kill(-pid_, SIGTERM);
  }
  if (!wait_for_exit(grace)) {
    std::lock_guard lk(mu_);
    if (!status_) ::kill(-pid_, SIGKILL);
  }
  wait_for_exit(std::chrono::hours(1));
  return *exit_status();
}

}  // namespace cellkit::engine
