#pragma once

#include "hesp/bands.hpp"
#include "hesp/estimate.hpp"
#include "hesp/panel.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace hesp {

/// Uploaded panel with its estimation step done once.
struct Dataset {
    std::string id;
    PanelData data;
    PointwiseEstimate est;
    CovMatrix cov;
    std::optional<DemeanedPanel> dp;        // absent for staggered aggregates
    std::string estimate_json;
};

/// Id map of immutable datasets; safe for concurrent readers and writers.
class DatasetStore {
public:
    [[nodiscard]] std::shared_ptr<const Dataset> add(PanelData data);
    [[nodiscard]] std::shared_ptr<const Dataset> get(const std::string& id) const;
    [[nodiscard]] std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const Dataset>> items_;
    std::size_t next_ = 1;
};

struct HttpResponse {
    int status = 200;
    std::string body;                       // JSON
};

/// JSON-over-HTTP front end. Requests can be dispatched directly through
/// handle() or served over a socket.
class Service {
public:
    Service();
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    [[nodiscard]] HttpResponse handle(const std::string& method, const std::string& path,
                                      const std::multimap<std::string, std::string>& query, const std::string& body);

    /// Binds and serves on a background thread; port 0 picks a free port.
    /// Returns the bound port.
    int start(const std::string& host, int port);
    /// Binds and serves on the calling thread until stop().
    void run(const std::string& host, int port);
    void stop();

    [[nodiscard]] const DatasetStore& store() const noexcept { return store_; }

private:
    void mount();

    DatasetStore store_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace hesp
