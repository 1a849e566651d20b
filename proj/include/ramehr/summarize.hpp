#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "ramehr/corpus.hpp"
#include "ramehr/ehr.hpp"
#include "ramehr/retrieval.hpp"

namespace ramehr {

// Prompt with slots <task>, <medical code type>, <code name>, <passages>.
struct PromptTemplate {
  std::string text;
  static PromptTemplate default_template();
};

std::string render_prompt(const PromptTemplate& tpl, const TaskSpec& task,
                          const MedicalCode& code, const std::vector<Passage>& passages);

class SummaryClient {
 public:
  virtual ~SummaryClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string tag() const = 0;
};

// Pure stand-in for the LLM: extracts the knowledge section from the prompt
// and returns its first `max_words` words. Counts completions for tests.
class StubClient : public SummaryClient {
 public:
  explicit StubClient(int max_words = 40) : max_words_(max_words) {}
  std::string complete(const std::string& prompt) override;
  std::string tag() const override { return "stub"; }
  long call_count() const { return calls_.load(); }

 private:
  int max_words_;
  std::atomic<long> calls_{0};
};

struct HttpClientConfig {
  std::string endpoint;        // e.g. http://host:port/v1/complete
  std::string model;
  std::string auth_token_env;  // env var holding a bearer token, optional
  int timeout_seconds = 30;
  int max_retries = 3;
};

// POSTs {"model":..,"prompt":..} and expects {"completion":..}. Retries with
// exponential backoff before giving up.
class HttpSummaryClient : public SummaryClient {
 public:
  explicit HttpSummaryClient(HttpClientConfig cfg) : cfg_(std::move(cfg)) {}
  std::string complete(const std::string& prompt) override;
  std::string tag() const override { return "http:" + cfg_.model; }

 private:
  HttpClientConfig cfg_;
};

struct KnowledgeSummary {
  std::string code;
  std::string task;
  std::string text;
  std::vector<std::string> provenance;  // retrieved passage ids, length <= k
  std::string client_tag;
};

// Keyed by (code id, task name), backed by an append-only JSONL file.
// Thread-safe; duplicate in-flight keys coalesce to a single completion.
class SummaryCache {
 public:
  explicit SummaryCache(std::string path);  // replays existing file if present
  const std::string& path() const { return path_; }
  std::size_t size() const;
  bool contains(const std::string& code, const std::string& task) const;
  KnowledgeSummary get(const std::string& code, const std::string& task) const;

  // Returns the cached summary or runs `compute` exactly once per key.
  KnowledgeSummary get_or_compute(const std::string& code, const std::string& task,
                                  const std::function<KnowledgeSummary()>& compute);

 private:
  void append_locked(const KnowledgeSummary& s);
  std::string path_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::pair<std::string, std::string>, KnowledgeSummary> map_;
  std::set<std::pair<std::string, std::string>> in_flight_;
};

KnowledgeSummary summarize_code(const MedicalCode& code, const TaskSpec& task,
                                const Corpus& corpus, const VectorIndex& index,
                                const Embedder& emb, SummaryClient& client,
                                SummaryCache& cache, int k,
                                const PromptTemplate& tpl = PromptTemplate::default_template(),
                                int max_retries = 3);

}  // namespace ramehr
