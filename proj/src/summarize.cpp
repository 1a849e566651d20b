#include "ramehr/summarize.hpp"

#include <chrono>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include <httplib.h>

namespace ramehr {

using nlohmann::json;

namespace {
constexpr const char* kKnowledgeHeader = "Knowledge:";
constexpr const char* kSummaryFooter = "Summary:";

std::string replace_slot(std::string s, const std::string& slot, const std::string& value) {
  auto pos = s.find(slot);
  if (pos == std::string::npos)
    throw DataError("prompt template is missing slot " + slot);
  while (pos != std::string::npos) {
    s.replace(pos, slot.size(), value);
    pos = s.find(slot, pos + value.size());
  }
  return s;
}
}  // namespace

PromptTemplate PromptTemplate::default_template() {
  return PromptTemplate{
      "Your task: <task>\n"
      "Below is external knowledge retrieved for the <medical code type> \"<code name>\".\n"
      "Write a short summary of the information most useful for the task above.\n" +
      std::string(kKnowledgeHeader) + "\n<passages>\n" + kSummaryFooter};
}

std::string render_prompt(const PromptTemplate& tpl, const TaskSpec& task,
                          const MedicalCode& code, const std::vector<Passage>& passages) {
  if (passages.empty())
    throw DataError("render_prompt requires at least one passage (code " + code.id + ")");
  std::ostringstream ptexts;
  for (std::size_t i = 0; i < passages.size(); ++i) {
    if (i) ptexts << "\n";
    ptexts << "- " << passages[i].text;
  }
  std::string s = replace_slot(tpl.text, "<task>", task.description);
  s = replace_slot(s, "<medical code type>", code_type_name(code.kind));
  s = replace_slot(s, "<code name>", code.name);
  s = replace_slot(s, "<passages>", ptexts.str());
  return s;
}

std::string StubClient::complete(const std::string& prompt) {
  calls_.fetch_add(1);
  // take the knowledge section when present, else the whole prompt
  std::string body = prompt;
  auto start = prompt.rfind(kKnowledgeHeader);
  if (start != std::string::npos) {
    start += std::string(kKnowledgeHeader).size();
    auto end = prompt.find(kSummaryFooter, start);
    body = prompt.substr(start, end == std::string::npos ? std::string::npos : end - start);
  }
  std::istringstream in(body);
  std::ostringstream out;
  std::string word;
  int n = 0;
  while (n < max_words_ && in >> word) {
    if (word == "-") continue;  // passage bullets
    if (n) out << ' ';
    out << word;
    ++n;
  }
  std::string s = out.str();
  return s.empty() ? "(no knowledge)" : s;
}

std::string HttpSummaryClient::complete(const std::string& prompt) {
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(100 << (attempt - 1)));
    try {
      auto scheme_end = cfg_.endpoint.find("://");
      if (scheme_end == std::string::npos) throw DataError("bad endpoint: " + cfg_.endpoint);
      auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
      std::string host = cfg_.endpoint.substr(0, path_start);
      std::string path = path_start == std::string::npos ? "/" : cfg_.endpoint.substr(path_start);
      httplib::Client cli(host);
      cli.set_read_timeout(cfg_.timeout_seconds, 0);
      httplib::Headers headers;
      if (!cfg_.auth_token_env.empty()) {
        if (const char* tok = std::getenv(cfg_.auth_token_env.c_str()))
          headers.emplace("Authorization", std::string("Bearer ") + tok);
      }
      json body{{"model", cfg_.model}, {"prompt", prompt}};
      auto res = cli.Post(path, headers, body.dump(), "application/json");
      if (!res) {
        last_error = "connection failed";
        continue;
      }
      if (res->status != 200) {
        last_error = "http status " + std::to_string(res->status);
        continue;
      }
      return json::parse(res->body).at("completion").get<std::string>();
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  throw DataError("summary completion failed after " + std::to_string(cfg_.max_retries + 1) +
                  " attempts: " + last_error);
}

SummaryCache::SummaryCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;  // fresh cache
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      KnowledgeSummary s;
      s.code = j.at("code").get<std::string>();
      s.task = j.at("task").get<std::string>();
      s.text = j.at("summary").get<std::string>();
      s.provenance = j.at("provenance").get<std::vector<std::string>>();
      s.client_tag = j.at("client_tag").get<std::string>();
      map_[{s.code, s.task}] = std::move(s);
    } catch (const json::exception& e) {
      throw DataError(path_ + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::size_t SummaryCache::size() const {
  std::lock_guard lk(mu_);
  return map_.size();
}

bool SummaryCache::contains(const std::string& code, const std::string& task) const {
  std::lock_guard lk(mu_);
  return map_.count({code, task}) > 0;
}

KnowledgeSummary SummaryCache::get(const std::string& code, const std::string& task) const {
  std::lock_guard lk(mu_);
  auto it = map_.find({code, task});
  if (it == map_.end()) throw DataError("no cached summary for (" + code + ", " + task + ")");
  return it->second;
}

void SummaryCache::append_locked(const KnowledgeSummary& s) {
  std::ofstream out(path_, std::ios::app);
  if (!out) throw DataError("cannot append to summary cache: " + path_);
  json j{{"code", s.code}, {"task", s.task}, {"summary", s.text},
         {"provenance", s.provenance}, {"client_tag", s.client_tag}};
  out << j.dump() << "\n";
  out.flush();
  if (!out) throw DataError("failed writing summary cache: " + path_);
}

KnowledgeSummary SummaryCache::get_or_compute(
    const std::string& code, const std::string& task,
    const std::function<KnowledgeSummary()>& compute) {
  std::pair<std::string, std::string> key{code, task};
  std::unique_lock lk(mu_);
  for (;;) {
    auto it = map_.find(key);
    if (it != map_.end()) return it->second;
    if (!in_flight_.count(key)) break;
    cv_.wait(lk);  // another thread is computing this key
  }
  in_flight_.insert(key);
  lk.unlock();
  KnowledgeSummary result;
  try {
    result = compute();
  } catch (...) {
    lk.lock();
    in_flight_.erase(key);
    cv_.notify_all();
    throw;
  }
  lk.lock();
  append_locked(result);  // persisted before the key becomes visible
  map_[key] = result;
  in_flight_.erase(key);
  cv_.notify_all();
  return result;
}

KnowledgeSummary summarize_code(const MedicalCode& code, const TaskSpec& task,
                                const Corpus& corpus, const VectorIndex& index,
                                const Embedder& emb, SummaryClient& client,
                                SummaryCache& cache, int k, const PromptTemplate& tpl,
                                int max_retries) {
  if (k < 1) throw UsageError("k must be >= 1");
  return cache.get_or_compute(code.id, task.name, [&]() {
    auto res = topk(index, emb, code.name, k);
    std::vector<Passage> passages;
    KnowledgeSummary s;
    for (const auto& hit : res.hits) {
      const Passage* p = corpus.find(hit.passage_id);
      if (!p) throw DataError("retrieved passage not in corpus: " + hit.passage_id);
      passages.push_back(*p);
      s.provenance.push_back(hit.passage_id);
    }
    std::string prompt = render_prompt(tpl, task, code, passages);
    std::string text;
    std::string last_error;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
      try {
        text = client.complete(prompt);
        last_error.clear();
        break;
      } catch (const std::exception& e) {
        last_error = e.what();
      }
    }
    if (!last_error.empty())
      throw DataError("summarization failed for code " + code.id + ": " + last_error);
    if (text.empty()) throw DataError("client returned empty summary for code " + code.id);
    s.code = code.id;
    s.task = task.name;
    s.text = std::move(text);
    s.client_tag = client.tag();
    return s;
  });
}

}  // namespace ramehr
